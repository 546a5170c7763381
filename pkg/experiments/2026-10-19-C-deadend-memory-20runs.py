#! /usr/bin/env python

import project


CONFIGS = [
    "t_junction_deadend",
]
# FULL should commit to the dead-end (left) sectors less often than FSM.
METHODS = ["FSM", "FULL"]
EXTRA_OPTIONS = ["--carry-memory"]
ATTRIBUTES = project.ATTRIBUTES + [project.LEFT_COMMITS]

exp = project.get_navigation_experiment(CONFIGS, METHODS, attributes=ATTRIBUTES,
                                        extra_options=EXTRA_OPTIONS)
exp.run_steps()
