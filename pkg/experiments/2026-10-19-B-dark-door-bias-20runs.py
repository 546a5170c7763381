#! /usr/bin/env python

import project


CONFIGS = [
    "dark_right_door",
]
METHODS = ["NAIVE", "FSM", "FULL"]
ATTRIBUTES = project.ATTRIBUTES + [project.FINAL_MILESTONE]

exp = project.get_navigation_experiment(CONFIGS, METHODS, attributes=ATTRIBUTES)
exp.run_steps()
