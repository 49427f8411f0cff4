# Experiment harness: configuration, runs, plots and CLI
