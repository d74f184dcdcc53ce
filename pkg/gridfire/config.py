import copy
import ml_collections as mlc


def run_config(name="default", threads=None, quiet=False):
    c = copy.deepcopy(config)
    if name == "default":
        pass
    elif name == "enumerate":
        # Brute-force worst-case search; only for supports under the cap.
        c.subproblem.mode = "enumerate"
    elif name == "cbc":
        c.solver.backend = "cbc"
    elif name == "fast":
        c.solver.mip_rel_gap = 1e-6
        c.driver.max_iterations = 100
        c.montecarlo.samples = 500
        c.subproblem.verify_support_max = 0
    else:
        raise ValueError("Invalid run config name")

    if threads is not None:
        c.globals.threads = threads

    if quiet:
        c.globals.progress = False

    return c


threads = mlc.FieldReference(1, field_type=int)
tol = mlc.FieldReference(1e-8, field_type=float)
progress = mlc.FieldReference(True, field_type=bool)

config = mlc.ConfigDict(
    {
        "solver": {
            "backend": "highs",
            "time_limit": mlc.FieldReference(None, field_type=float),
            "mip_rel_gap": 1e-9,
            "feasibility_tol": tol,
            "optimality_tol": tol,
            "threads": threads,
        },
        "driver": {
            "max_iterations": 500,
            # Gap denominator floor, in currency units.
            "gap_floor": 1.0,
            # Tolerance for the LB <= best UB sanity check.
            "bound_tol": 1e-6,
        },
        "ambiguity": {
            "support_cap": 2000000,
            "fix_psi_lower": False,
            "threads": threads,
            "progress": progress,
        },
        "master": {
            # Apply the binary expansion to lines with beta = 0 as well.
            "expand_zero_beta_lines": True,
        },
        "subproblem": {
            # "milp" | "enumerate"
            "mode": "milp",
            "calibration_tol": 1e-6,
            "max_recalibrations": 3,
            "recalibration_factor": 10.0,
            # Relative distance to U below which a gated multiplier counts as
            # saturated; saturation triggers a re-solve with wider bounds.
            "saturation_tol": 1e-6,
            # Cross-check the MILP against full enumeration when the support
            # has at most this many scenarios; 0 disables.
            "verify_support_max": 256,
            "threads": threads,
            "progress": progress,
        },
        "montecarlo": {
            "samples": 2000,
            "seed": 0,
            "cvar_level": 0.95,
            "chunksize": 16,
            "threads": threads,
            "progress": progress,
        },
        "globals": {
            "threads": threads,
            "progress": progress,
            "tol": tol,
        },
    }
)


def solver_params(c):
    """Plain-dict solver parameters, safe to ship to worker processes."""
    return c.solver.to_dict()
