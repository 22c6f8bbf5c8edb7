"""Two independent estimators of the ergodic minimizing value.

The ergodic minimizing value of an observable is the smallest possible
long-run time average over orbits.  The package estimates it two ways:
by enumerating periodic orbits, and as the additive eigenvalue (min cycle
mean) of a min-plus kernel.  Agreement between the two is the package's
built-in cross-validation.
"""

from weakkam import (Grid, SuspensionFlow, constant_observable,
                     cross_validated_ergodic_value,
                     distance_squared_observable, ergodic_value,
                     make_observable)

model = SuspensionFlow()
grid = Grid((16, 16, 10), (1.0, 1.0, model.roof), model.base_matrix)

for phi in (constant_observable(1.7),
            make_observable(model, "coboundary"),
            distance_squared_observable(model)):
    v_orb, _ = ergodic_value(model, phi, "periodic_orbits", max_period=4)
    v_drift, rep = ergodic_value(model, phi, "minplus_drift", grid=grid,
                                 h=grid.spacings[2])
    print(f"{phi.name:>20}: periodic-orbit {v_orb:+.6f}   "
          f"min-plus drift {v_drift:+.6f}   gap {abs(v_orb - v_drift):.2e}")

# cross_validated_ergodic_value raises if the estimators disagree beyond 5x
# the requested tolerance; otherwise it returns the drift value + a report.
phi = distance_squared_observable(model)
value, report = cross_validated_ergodic_value(model, phi, 1e-6, grid=grid,
                                              h=grid.spacings[2])
print("\ncross-validated value for the distance-squared observable:", value)
print("estimator gap:", report["gap"])
