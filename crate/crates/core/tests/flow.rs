use bubbletower::flow::{evolve, linear_consistency, FlowConfig, FlowStatus};
use bubbletower::mesh::ProblemParams;
use bubbletower::spectral::{first_eigenpair, LinearizedOperator};
use bubbletower::stationary::{find_nodal_solution, StationaryConfig, StationarySolution};

fn small_tower() -> (StationarySolution, f64) {
    let params = ProblemParams::new(4, 2, 1e-2).unwrap();
    let cfg = StationaryConfig {
        intervals: 1024,
        ..Default::default()
    };
    let sol = find_nodal_solution(&params, &cfg).unwrap();
    let op = LinearizedOperator::at(&sol.field, params.p_s()).unwrap();
    let lambda = first_eigenpair(&op).unwrap().lambda;
    (sol, lambda)
}

#[test]
fn perturbation_follows_linearization_for_two_growth_times() {
    let (sol, lambda_eps) = small_tower();
    let rate = lambda_eps.abs();
    let dev = linear_consistency(&sol.field, 1.001, 0.02 / rate, 2.0 / rate).unwrap();
    assert!(dev <= 0.05, "relative deviation {dev}");
}

#[test]
fn tower_is_a_fixed_point_of_the_flow() {
    let (sol, lambda_eps) = small_tower();
    let cfg = FlowConfig {
        t_end: 10.0 / lambda_eps.abs(),
        ..Default::default()
    };
    let run = evolve(&sol.field.clone().with_zero_trace(), &cfg).unwrap();
    assert!(
        matches!(run.status, FlowStatus::Stationary),
        "{:?}",
        run.status
    );
    assert!(
        run.max_drift <= 1e-6 * sol.field.sup_norm(),
        "{}",
        run.max_drift
    );
}

#[test]
fn scaling_either_way_leaves_the_tower() {
    let (sol, _) = small_tower();
    let cfg = FlowConfig {
        t_end: 2.0,
        ..Default::default()
    };
    let above = evolve(&sol.field.scaled(1.05).with_zero_trace(), &cfg).unwrap();
    assert!(
        matches!(above.status, FlowStatus::BlowUp { .. }),
        "{:?}",
        above.status
    );
    let below = evolve(&sol.field.scaled(0.1).with_zero_trace(), &cfg).unwrap();
    assert!(
        matches!(
            below.status,
            FlowStatus::GlobalBounded { decayed: true, .. }
        ),
        "{:?}",
        below.status
    );
}
