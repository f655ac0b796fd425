use std::path::Path;

use oblique_forest::bench::{compare, convolved_twin, random_inputs};
use oblique_forest::distortion::{permutation_from_transform, permute_forest};
use oblique_forest::probe::{covered_region, probe};
use oblique_forest::{build_forest, Error, Forest, Sample};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::Report;

fn read_forest(path: &Path) -> Result<Forest, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read model {}: {e}", path.display())))?;
    Forest::from_json(&text)
        .map_err(|e| CliError::Invalid(format!("model {}: {e}", path.display())))
}

fn write_forest(path: &Path, forest: &Forest) -> Result<(), CliError> {
    let text = forest.to_json()?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn check_dims(forest: &Forest, samples: &[Sample]) -> Result<(), CliError> {
    match samples.iter().find(|s| s.dims() != forest.dims()) {
        Some(s) => Err(Error::DimensionMismatch {
            expected: forest.dims(),
            actual: s.dims(),
        }
        .into()),
        None => Ok(()),
    }
}

fn rms(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for e in errors {
        sq += e * e;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}

pub fn train(cfg: &RunConfig) -> Result<Report, CliError> {
    let out = cfg.require_out()?;
    let (space, samples) = cfg.require_data()?.load()?;
    let mut fp = cfg.forest.clone();
    if let Some(seed) = cfg.seed {
        fp.seed = seed;
    }
    let forest = build_forest(&samples, &space, &cfg.build, &fp)?.forest;
    write_forest(out, &forest)?;

    let eps = cfg.build.epsilon;
    let mut r = Report::new("train");
    r.put("samples", samples.len());
    r.put("dims", space.dims());
    r.put("trees", forest.trees.len());
    r.put("epsilon", eps);
    let mut attained = true;
    for (t, tree) in forest.trees.iter().enumerate() {
        let worst = tree
            .root
            .leaves()
            .iter()
            .map(|(m, _)| m.rms)
            .fold(0.0, f64::max);
        let ok = worst <= eps;
        attained &= ok;
        r.put(format!("tree{t}.leaves"), tree.leaf_count());
        r.put(format!("tree{t}.depth"), tree.depth());
        r.put(
            format!("tree{t}.train_rms"),
            rms(samples.iter().map(|s| tree.evaluate_hard(&s.x) - s.y)),
        );
        r.put(format!("tree{t}.max_leaf_rms"), worst);
        r.put(format!("tree{t}.epsilon_attained"), ok);
    }
    r.put(
        "forest_train_rms",
        rms(samples.iter().map(|s| forest.evaluate(&s.x) - s.y)),
    );
    r.put("epsilon_attained", attained);
    r.put("out", out.display().to_string());
    Ok(r)
}

pub fn eval(cfg: &RunConfig) -> Result<Report, CliError> {
    let forest = read_forest(cfg.require_model()?)?;
    let (_, samples) = cfg.require_data()?.load()?;
    check_dims(&forest, &samples)?;
    let outputs: Vec<_> = samples
        .iter()
        .map(|s| forest.evaluate_detail(&s.x))
        .collect();
    let n = samples.len();
    let mut r = Report::new("eval");
    r.put("samples", n);
    r.put(
        "rms",
        rms(outputs.iter().zip(&samples).map(|(o, s)| o.value - s.y)),
    );
    r.put(
        "max_abs_error",
        outputs
            .iter()
            .zip(&samples)
            .map(|(o, s)| (o.value - s.y).abs())
            .fold(0.0, f64::max),
    );
    let hard = forest
        .trees
        .iter()
        .map(|t| rms(samples.iter().map(|s| t.evaluate_hard(&s.x) - s.y)))
        .fold(0.0, f64::max);
    r.put("hard_rms", hard);
    let helper = outputs.iter().filter(|o| o.helper_weight > 0.0).count();
    r.put(
        "helper_active_fraction",
        if n == 0 {
            0.0
        } else {
            helper as f64 / n as f64
        },
    );
    let weights = outputs.iter().map(|o| o.tree_weight);
    r.put(
        "min_tree_weight",
        if n == 0 {
            0.0
        } else {
            weights.clone().fold(f64::INFINITY, f64::min)
        },
    );
    r.put(
        "mean_tree_weight",
        if n == 0 {
            0.0
        } else {
            weights.sum::<f64>() / n as f64
        },
    );
    Ok(r)
}

pub fn distort(cfg: &RunConfig) -> Result<Report, CliError> {
    let out = cfg.require_out()?;
    let tag = cfg.transform.as_deref().ok_or_else(|| {
        CliError::Invalid("a transform is required (--transform or \"transform\")".into())
    })?;
    let forest = read_forest(cfg.require_model()?)?;
    let p = permutation_from_transform(forest.grid, tag)?;
    let moved = permute_forest(&forest, &p)?;
    write_forest(out, &moved)?;
    let mut r = Report::new("distort");
    r.put("transform", p.descriptor.clone());
    r.put(
        "map",
        p.map
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" "),
    );
    r.put("trees", moved.trees.len());
    r.put("nodes", moved.node_count());
    r.put("out", out.display().to_string());
    Ok(r)
}

pub fn bench(cfg: &RunConfig) -> Result<Report, CliError> {
    let forest = read_forest(cfg.require_model()?)?;
    let inputs: Vec<Vec<f64>> = match &cfg.data {
        Some(src) => {
            let (_, samples) = src.load()?;
            check_dims(&forest, &samples)?;
            samples.into_iter().map(|s| s.x).collect()
        }
        None => {
            let (lo, hi) = covered_region(&forest);
            random_inputs(&lo, &hi, cfg.bench.inputs, cfg.seed())
        }
    };
    let base = forest.clone();
    let twin = convolved_twin(&forest, &cfg.bench.kernel)?;
    let report = compare(&base, &twin, &inputs, cfg.bench.repeats)?;
    let mut r = Report::new("bench");
    r.put_lines(&report.summary());
    Ok(r)
}

pub fn probe_cmd(cfg: &RunConfig) -> Result<Report, CliError> {
    let forest = read_forest(cfg.require_model()?)?;
    let mut params = cfg.probe.clone();
    if let Some(seed) = cfg.seed {
        params.seed = seed;
    }
    let report = probe(&forest, &params)?;
    let mut r = Report::new("probe");
    r.put_lines(&report.summary());
    Ok(r)
}
