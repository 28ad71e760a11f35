use clap::Args;
use fusemod_core::eval::{bench_fps, format_bench_table};
use fusemod_core::models::build_model;

use crate::config::{config_err, parse_plan, RunConfig};

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated plans; `baseline`, `two` and `three` are shorthands.
    #[arg(long, value_delimiter = ',')]
    pub plans: Vec<String>,

    #[arg(long)]
    pub encoder: Option<String>,

    #[arg(long)]
    pub height: Option<usize>,

    #[arg(long)]
    pub width: Option<usize>,

    #[arg(long)]
    pub iterations: Option<usize>,

    #[arg(long)]
    pub warmup: Option<usize>,
}

pub fn run(mut cfg: RunConfig, args: BenchArgs) -> anyhow::Result<()> {
    if !args.plans.is_empty() {
        cfg.eval.bench_plans = args.plans;
    }
    if let Some(e) = args.encoder {
        cfg.model.encoder = e;
    }
    let e = &mut cfg.eval;
    e.height = args.height.unwrap_or(e.height);
    e.width = args.width.unwrap_or(e.width);
    e.iterations = args.iterations.unwrap_or(e.iterations);
    e.warmup = args.warmup.unwrap_or(e.warmup);
    if e.height == 0 || e.width == 0 || e.iterations == 0 {
        return Err(config_err("eval.height, eval.width and eval.iterations must be positive"));
    }
    let spec = cfg.encoder()?;
    let e = &cfg.eval;

    let mut reports = Vec::new();
    for name in &e.bench_plans {
        let plan = parse_plan(name)?;
        let model = build_model(&plan, &spec, cfg.seed)?;
        let report = bench_fps(&model, &plan.to_string(), (e.height, e.width), e.warmup, e.iterations)?;
        println!("{}", report.to_record());
        reports.push(report);
    }
    print!("{}", format_bench_table(&reports));
    Ok(())
}
