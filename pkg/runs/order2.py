from manet.experiments import combat_runs, ensure_run, experiment_config, nav_runs

def log(m):
    print(m, flush=True)

ensure_run(experiment_config("combat", "manet", 0), log=log)
log(f"nav seed 0: {nav_runs(0, log=log)}")
log(f"combat seed 0: {combat_runs(0, log=log)}")
for s in (1, 2):
    log(f"nav seed {s}: {nav_runs(s, log=log)}")
