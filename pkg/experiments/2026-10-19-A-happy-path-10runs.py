#! /usr/bin/env python

import project


CONFIGS = [
    "straight_corridor",
    "decoy_salience",
]
METHODS = ["NAIVE", "FSM", "FULL"]

exp = project.get_navigation_experiment(CONFIGS, METHODS)
exp.run_steps()
