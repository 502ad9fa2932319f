use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::json;

use reweigh::balancer::{
    self, compute_weights, parse_weights, BalanceConfig, BalanceError, WeightParseError,
};
use reweigh::baselines::{dist_k_baseline, random_baseline, BaselineError, BaselineSpec};
use reweigh::data::{
    dataset_stats, derive_property_sets, matched_rank, parse_gap_tsv, parse_name_annotations,
    parse_predictions, DataError, Dataset, Group, PredictionSet, PropertyFamilies,
};
use reweigh::metrics::{
    correct_set, evaluate_credit, evaluate_predictions, MetricError, SystemEvaluation, WeightMap,
    WeightSet,
};
use reweigh::oracle::oracle_suite;
use reweigh::report::{build_table, render_histogram, HistogramInput, HistogramSpec};
use reweigh::significance::{exact_p_value, randomization_test, BiasMetric, SignificanceError};

use crate::{
    AnalyzeArgs, DataArgs, EvaluateArgs, Family, Format, Metric, SignificanceArgs, TrimArgs,
    VerifyArgs, WeighArgs,
};

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

/// Input problem detected by the CLI itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Maps the first recognised cause to an exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(b) = cause.downcast_ref::<BalanceError>() {
            return match b {
                BalanceError::Infeasible { .. } => EXIT_INFEASIBLE,
                BalanceError::EmptyGroup(_) | BalanceError::UnknownMember { .. } => EXIT_INPUT,
                _ => EXIT_INTERNAL,
            };
        }
        if cause.is::<Invalid>()
            || cause.is::<DataError>()
            || cause.is::<WeightParseError>()
            || cause.is::<MetricError>()
            || cause.is::<BaselineError>()
            || cause.is::<SignificanceError>()
            || cause.is::<std::io::Error>()
        {
            return EXIT_INPUT;
        }
    }
    EXIT_INTERNAL
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load(args: &DataArgs, need_annotations: bool) -> Result<Dataset> {
    let ds = parse_gap_tsv(&read(&args.dataset)?)
        .with_context(|| format!("parsing {}", args.dataset.display()))?;
    match &args.annotations {
        Some(p) => parse_name_annotations(&read(p)?, &ds).with_context(|| format!("parsing {}", p.display())),
        None if need_annotations => Err(Invalid("--annotations is required for this command".into()).into()),
        None => Ok(ds),
    }
}

/// `LABEL=PATH` or bare `PATH` labelled by its file stem.
fn labelled(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((label, path)) if !label.is_empty() && !label.contains(['/', '\\']) => {
            (label.to_string(), PathBuf::from(path))
        }
        _ => {
            let path = PathBuf::from(spec);
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (stem, path)
        }
    }
}

fn load_weights(spec: &str) -> Result<WeightSet> {
    let (label, path) = labelled(spec);
    let weights = parse_weights(&read(&path)?).with_context(|| format!("parsing {}", path.display()))?;
    Ok(WeightSet { label, weights })
}

fn load_predictions(path: &Path, ds: &Dataset) -> Result<PredictionSet> {
    let p = parse_predictions(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let unknown = p.unknown_ids(ds);
    if !unknown.is_empty() {
        return Err(Invalid(format!(
            "{}: {} ids not in the dataset: {}",
            path.display(),
            unknown.len(),
            unknown.join(", ")
        ))
        .into());
    }
    let missing = correct_set(&p, ds).missing;
    if !missing.is_empty() {
        return Err(Invalid(format!(
            "{}: no prediction for {} dataset ids: {}",
            path.display(),
            missing.len(),
            missing.join(", ")
        ))
        .into());
    }
    Ok(p)
}

pub fn weigh(args: WeighArgs) -> Result<()> {
    let mut ds = load(&args.data, true)?;
    if args.trim {
        ds = balancer::trim(&ds, args.trim_flags.max_names, args.trim_flags.max_rank);
    }
    let families = PropertyFamilies {
        names: args.properties.contains(&Family::Names),
        distance: args.properties.contains(&Family::Distance),
    };
    let label = args.label.unwrap_or_else(|| {
        match (args.trim, families.names, families.distance) {
            (true, _, _) => "W_t",
            (false, true, true) => "W",
            (false, true, false) => "W_num",
            (false, false, true) => "W_dist",
            (false, false, false) => "W_none",
        }
        .to_string()
    });
    let props = derive_property_sets(&ds, families);
    let config = BalanceConfig {
        collapse: !args.naive,
        ..BalanceConfig::default()
    };
    let w = compute_weights(&ds, &props, &config)?;
    let tsv = write(&args.out_dir, &format!("{label}.tsv"), &w.to_tsv())?;
    let meta = serde_json::to_string_pretty(&w.metadata())? + "\n";
    write(&args.out_dir, &format!("{label}.json"), &meta)?;
    println!(
        "{}: {} examples, {} property sets, {} classes, objective {:.6}",
        tsv.display(),
        w.entries.len(),
        props.len(),
        w.classes,
        w.objective
    );
    Ok(())
}

fn baseline_spec(name: &str, args: &EvaluateArgs) -> Result<BaselineSpec> {
    let spec = match name.to_ascii_lowercase().as_str() {
        "random" => BaselineSpec::Random {
            repetitions: args.repetitions,
            seed: args.seed,
        },
        other => {
            let k = other
                .strip_prefix("dist-")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| Invalid(format!("unknown baseline `{name}`; use random or dist-K")))?;
            BaselineSpec::DistK {
                k,
                allow_large_k: args.allow_large_k,
            }
        }
    };
    spec.validate()?;
    Ok(spec)
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    if args.predictions.is_empty() && args.baseline.is_empty() {
        return Err(Invalid("nothing to evaluate: pass --predictions or --baseline".into()).into());
    }
    let ds = load(&args.data, !args.baseline.is_empty())?;
    let sets = args
        .weights
        .iter()
        .map(|s| load_weights(s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<SystemEvaluation> = Vec::new();
    for spec in &args.predictions {
        let (name, path) = labelled(spec);
        let p = load_predictions(&path, &ds)?;
        rows.push(evaluate_predictions(&name, &p, &ds, &sets)?);
    }
    for name in &args.baseline {
        let row = match baseline_spec(name, &args)? {
            spec @ BaselineSpec::Random { repetitions, seed } => {
                let r = random_baseline(&ds, repetitions, seed)?;
                evaluate_credit(&spec.name(), r.f1, &r.exact_credit, &ds, &sets)?
            }
            spec @ BaselineSpec::DistK { k, .. } => {
                evaluate_predictions(&spec.name(), &dist_k_baseline(&ds, k)?, &ds, &sets)?
            }
        };
        rows.push(row);
    }
    let table = build_table(&rows);
    match args.format {
        Format::Text => print!("{}", table.to_text()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&table.to_json())?),
    }
    Ok(())
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let ds = load(&args.data, true)?;
    let stats = dataset_stats(&ds);
    let per_group = |value: &dyn Fn(&reweigh::data::Example) -> Option<f64>| -> Vec<HistogramInput> {
        Group::ALL
            .iter()
            .map(|&g| HistogramInput {
                group: g.name().to_string(),
                values: ds
                    .group(g)
                    .filter_map(|e| value(e).map(|v| (e.id.clone(), v)))
                    .collect(),
            })
            .collect()
    };
    let mut outputs = vec![
        (
            "names".to_string(),
            render_histogram(&per_group(&|e| Some(e.name_spans.len() as f64)), HistogramSpec::COUNTS),
        ),
        (
            "ranks".to_string(),
            render_histogram(&per_group(&|e| matched_rank(e).map(|r| r as f64)), HistogramSpec::COUNTS),
        ),
    ];
    for spec in &args.weights {
        let set = load_weights(spec)?;
        let index = ds.index();
        let mut inputs: Vec<HistogramInput> = Group::ALL
            .iter()
            .map(|g| HistogramInput {
                group: g.name().to_string(),
                values: Vec::new(),
            })
            .collect();
        for (id, &w) in &set.weights {
            let e = index
                .get(id.as_str())
                .ok_or_else(|| Invalid(format!("{}: unknown example id `{id}`", set.label)))?;
            inputs[(e.group == Group::Feminine) as usize].values.push((id.clone(), w));
        }
        outputs.push((
            format!("weights-{}", set.label),
            render_histogram(&inputs, HistogramSpec::WEIGHTS),
        ));
    }

    for s in &stats {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        println!(
            "{}: {} examples, names mean {} sd {}, rank mean {} sd {}",
            s.group.name(),
            s.examples,
            fmt(s.name_counts.mean),
            fmt(s.name_counts.std_dev),
            fmt(s.candidate_ranks.mean),
            fmt(s.candidate_ranks.std_dev)
        );
    }
    write(&args.out_dir, "stats.json", &(serde_json::to_string_pretty(&stats)? + "\n"))?;
    for (name, h) in &outputs {
        match args.format {
            Format::Text => {
                write(&args.out_dir, &format!("{name}.csv"), &h.to_csv())?;
                if h.spec.display_max.is_some() {
                    write(&args.out_dir, &format!("{name}-outliers.csv"), &h.overflow_csv())?;
                }
            }
            Format::Json => {
                write(&args.out_dir, &format!("{name}.json"), &(serde_json::to_string_pretty(h)? + "\n"))?;
            }
        }
        if let Some(max) = h.spec.display_max {
            println!("{name}: {} binned, {} above {max}", h.binned(), h.overflow.len());
        }
        for g in &h.empty_groups {
            println!("{name}: group {g} has no values");
        }
    }
    Ok(())
}

pub fn trim(args: TrimArgs) -> Result<()> {
    let ds = load(&args.data, true)?;
    let kept = balancer::trim(&ds, args.trim_flags.max_names, args.trim_flags.max_rank);
    write(&args.out_dir, "trimmed.tsv", &kept.to_gap_tsv())?;
    write(&args.out_dir, "trimmed.jsonl", &kept.to_annotations_jsonl())?;
    println!(
        "kept {} of {} examples ({} masculine, {} feminine)",
        kept.len(),
        ds.len(),
        kept.group_size(Group::Masculine),
        kept.group_size(Group::Feminine)
    );
    Ok(())
}

pub fn significance(args: SignificanceArgs) -> Result<()> {
    let ds = load(&args.data, false)?;
    let first = load_predictions(&args.first, &ds)?;
    let second = load_predictions(&args.second, &ds)?;
    let weights: Option<WeightMap> = match &args.weights {
        Some(p) => Some(parse_weights(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => None,
    };
    let metric = match args.metric {
        Metric::AccBias => BiasMetric::AccBias,
        Metric::WBias => BiasMetric::WBias,
        Metric::WtBias => BiasMetric::WtBias,
    };
    let result = randomization_test(
        &first,
        &second,
        &ds,
        weights.as_ref(),
        metric,
        args.iterations,
        args.seed,
    )?;
    let mut out = serde_json::to_value(&result)?;
    if args.exact {
        out["exact_p_value"] = match exact_p_value(&first, &second, &ds, weights.as_ref(), metric) {
            Ok(p) => json!(p),
            Err(SignificanceError::TooLargeForExact(n)) => {
                eprintln!("note: {n} disagreeing examples, skipping exact enumeration");
                serde_json::Value::Null
            }
            Err(e) => return Err(e.into()),
        };
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

pub fn verify(args: VerifyArgs) -> Result<()> {
    let checks = oracle_suite(args.seed, args.instances);
    for c in &checks {
        println!("{}  {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        anyhow::bail!("{failed} oracle checks failed");
    }
    Ok(())
}
