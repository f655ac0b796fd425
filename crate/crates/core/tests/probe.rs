use oblique_forest::forest::{Combiner, ForestParams, WeightSpec};
use oblique_forest::probe::{probe, ProbeMode, ProbeParams};
use oblique_forest::space::{sample_function, FunctionKind};
use oblique_forest::*;

fn forest(combiner: Combiner, t_count: usize) -> Forest {
    let space = ImageSpace::uniform(2, 2, 1.0).unwrap();
    let samples = sample_function(
        &TargetFunction::named(FunctionKind::SinProduct),
        4000,
        &space,
        21,
    );
    let fp = ForestParams {
        t_count,
        delta: 0.03,
        weight_spec: WeightSpec {
            combiner,
            ..WeightSpec::default()
        },
        ..ForestParams::default()
    };
    build_forest(&samples, &space, &BuildParams::with_epsilon(0.02), &fp)
        .unwrap()
        .forest
}

#[test]
fn product_forest_is_smooth_across_crossings() {
    let f = forest(Combiner::Product, 3);
    let r = probe(&f, &ProbeParams::default()).unwrap();
    println!("{}", r.summary());
    assert!(r.crossings.len() >= 100);
    assert!(r.max_jump() <= 1e-6);
    assert_eq!(r.derivative_failures(), 0);
}

#[test]
fn min_forest_is_continuous() {
    let f = forest(Combiner::Min, 3);
    let r = probe(&f, &ProbeParams::default()).unwrap();
    println!("{}", r.summary());
    assert!(r.crossings.len() >= 100);
    assert!(r.max_jump() <= 1e-6);
}

#[test]
fn hard_tree_jumps() {
    let f = forest(Combiner::Product, 1);
    let params = ProbeParams {
        mode: ProbeMode::Hard,
        ..ProbeParams::default()
    };
    let r = probe(&f, &params).unwrap();
    println!("{}", r.summary());
    assert!(r.max_jump() > 1e-3);
}

#[test]
fn single_leaf_has_nothing_to_cross() {
    let space = ImageSpace::uniform(1, 2, 1.0).unwrap();
    let samples = sample_function(&TargetFunction::named(FunctionKind::Linear), 200, &space, 1);
    let f = build_forest(
        &samples,
        &space,
        &BuildParams::default(),
        &ForestParams::default(),
    )
    .unwrap()
    .forest;
    let r = probe(
        &f,
        &ProbeParams {
            max_segments: 20,
            ..ProbeParams::default()
        },
    )
    .unwrap();
    assert!(r.is_empty());
    assert!(r.summary().contains("no crossings sampled"));
}

#[test]
fn probes_are_deterministic() {
    let f = forest(Combiner::Product, 2);
    let p = ProbeParams {
        crossings: 20,
        seed: 9,
        ..ProbeParams::default()
    };
    assert_eq!(probe(&f, &p).unwrap(), probe(&f, &p).unwrap());
}

#[test]
fn rejects_bad_parameters() {
    let f = forest(Combiner::Product, 1);
    for p in [
        ProbeParams {
            jump_step: 0.0,
            ..ProbeParams::default()
        },
        ProbeParams {
            derivative_tolerance: -1.0,
            ..ProbeParams::default()
        },
        ProbeParams {
            steps: 0,
            ..ProbeParams::default()
        },
    ] {
        assert!(probe(&f, &p).is_err());
    }
}
