use std::path::Path;

use serde::Serialize;
use serde_json::json;

use amspim::array::{monte_carlo_sawl, write_mc_csv};
use amspim::attention::{
    dense_gemm_cycles, fidelity, fp_reference, run_attention, traffic_original, traffic_revised, write_reports_csv,
    Datapath, RunManifest, WeightSet, WEIGHT_FILES,
};
use amspim::config::RunConfig;
use amspim::profiler::{profile_with, write_profile_csv};
use amspim::softmax::build_lut;
use amspim::softmax::eval::{evaluate, SweepConfig};
use amspim::tensor::{gen_tensor, load_tensor, write_tensor, Distribution};
use amspim::{DType, Error, IntTensor, ModelShape, Result};

use crate::args::{GenArgs, LutArgs, MonteCarloArgs, ProfileArgs, SimulateArgs, SoftmaxEvalArgs, TrafficArgs};
use crate::output::{print_summary, OutDir};

#[derive(Serialize)]
struct Summary<T: Serialize> {
    command: &'static str,
    config: RunConfig,
    #[serde(flatten)]
    result: T,
    files: Vec<String>,
}

fn finish<T: Serialize>(
    command: &'static str,
    cfg: RunConfig,
    out: OutDir,
    format: crate::args::Format,
    result: T,
) -> Result<()> {
    let files = out.written.iter().map(|p| p.display().to_string()).collect();
    print_summary(
        format,
        &Summary {
            command,
            config: cfg,
            result,
            files,
        },
    )
}

fn synthetic(cfg: &RunConfig, density: Option<f64>, std: f64) -> Result<(IntTensor, WeightSet)> {
    let s = cfg.shape;
    let half = 1i64 << (cfg.ibp - 1);
    let x_dist = match density {
        Some(density) => Distribution::Sparse {
            density,
            lo: -half,
            hi: half - 1,
        },
        None => Distribution::Gaussian { mean: 0.0, std },
    };
    let x = gen_tensor(
        &[s.batch, s.tokens, s.hidden],
        DType::for_bits(cfg.ibp)?,
        x_dist,
        cfg.seed,
    )?;
    let w = WeightSet::random(&s, cfg.wbp, Distribution::Gaussian { mean: 0.0, std }, cfg.seed)?;
    Ok((x, w))
}

fn tensor_bytes(t: &IntTensor) -> impl FnOnce(&mut Vec<u8>) -> Result<()> + '_ {
    move |buf| write_tensor(buf, t)
}

pub fn gen(args: GenArgs) -> Result<()> {
    let cfg = args.common.resolve(args.shape)?;
    if cfg.out.is_none() {
        return Err(Error::InvalidArgument("gen needs --out DIR to write into".into()));
    }
    let (x, w) = synthetic(&cfg, args.density, args.std)?;
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write("x.bin", tensor_bytes(&x))?;
    for (name, t) in WEIGHT_FILES.iter().zip([&w.w_q, &w.w_k, &w.w_v, &w.w_o]) {
        out.write(name, tensor_bytes(t))?;
    }
    out.write_json("config.json", &cfg)?;
    finish("gen", cfg, out, args.common.format, json!({}))
}

/// Shape of a `gen` directory: `[B, N, D]` inputs and `[H, D, dk]` weights.
fn shape_of(x: &IntTensor, w: &WeightSet) -> Result<ModelShape> {
    match (x.shape(), w.w_q.shape()) {
        (&[b, n, d], &[h, _, dk]) => ModelShape::new(b, n, d, h, dk),
        (xs, ws) => Err(Error::Shape(format!(
            "inputs {xs:?} and query weights {ws:?} do not describe a layer"
        ))),
    }
}

fn load_inputs(dir: &Path) -> Result<(IntTensor, WeightSet)> {
    Ok((load_tensor(dir.join("x.bin"))?, WeightSet::load(dir)?))
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let (cfg, x, w) = match &args.input {
        Some(dir) => {
            let (x, w) = load_inputs(dir)?;
            let shape = match args.shape {
                Some(s) => s,
                None => shape_of(&x, &w)?,
            };
            let mut cfg = args.common.resolve(Some(shape))?;
            cfg.input_dir = Some(dir.clone());
            (cfg, x, w)
        }
        None => {
            let cfg = args.common.resolve(args.shape)?;
            let (x, w) = synthetic(&cfg, None, args.std)?;
            (cfg, x, w)
        }
    };
    let run = run_attention(&x, &w, &cfg)?;
    let s = cfg.shape;
    let y: Vec<f64> = (0..s.batch * s.tokens).flat_map(|i| run.dequantized_token(i)).collect();
    let fid = fidelity(&y, &fp_reference(&x, &w, &cfg)?, s.hidden)?;
    let dense = dense_gemm_cycles(
        s.hidden as u64,
        (s.batch * s.tokens) as u64,
        cfg.ibp as u64,
        cfg.sawl as u64,
    );
    let dk_shift = Datapath::from_config(&cfg)?.dk_shift();
    let manifest = RunManifest {
        config: cfg.clone(),
        traffic: run.traffic.clone(),
        traffic_original: traffic_original(&s),
        cost: run.cost.clone(),
        dense_baseline_cycles: dense,
        fidelity: Some(fid),
        notes: vec![
            format!(
                "logit scaling 1/sqrt({}) applied as a right shift by {dk_shift}",
                s.head_dim
            ),
            format!(
                "one dense A-W GEMM at this shape: {dense} cycles, {:.3} ms at {} ns per cycle",
                dense as f64 * cfg.cycle_ns * 1e-6,
                cfg.cycle_ns
            ),
            format!("key/value parse width: {}", cfg.kv_width),
        ],
    };
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write_json("summary.json", &manifest)?;
    out.write("reports.csv", |buf| write_reports_csv(buf, &run.traffic, &run.cost))?;
    out.write("y.bin", tensor_bytes(&run.y))?;
    out.write_json(
        "traces.json",
        &json!({ "out_exps": run.out_exps, "tokens": run.traces }),
    )?;
    let format = args.common.format;
    finish("simulate", cfg, out, format, manifest)
}

pub fn profile(args: ProfileArgs) -> Result<()> {
    let cfg = args.common.resolve(None)?;
    let mut rows = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let t = load_tensor(path)?;
        let bp = args.bp.unwrap_or(t.dtype().bits());
        let tag = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        rows.push((tag, profile_with(&t, bp, args.n_group, cfg.exec)?));
    }
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write("profile.csv", |buf| write_profile_csv(buf, &rows))?;
    let layers: Vec<_> = rows
        .iter()
        .map(|(tag, r)| json!({ "layer": tag, "report": r }))
        .collect();
    out.write_json("profile.json", &layers)?;
    finish("profile", cfg, out, args.common.format, json!({ "layers": layers }))
}

pub fn softmax_eval(args: SoftmaxEvalArgs) -> Result<()> {
    let cfg = args.common.resolve(None)?;
    let lut = build_lut(cfg.qi, cfg.n_e_max)?;
    let sweep = SweepConfig {
        tokens: args.tokens,
        len: args.n,
        logit_std: args.logit_std,
        n_e: args.n_e,
        seed: cfg.seed,
    };
    let eval = evaluate(&sweep, &lut, &cfg.softmax(), cfg.exec)?;
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write("softmax_eval.csv", |buf| {
        use std::io::Write;
        let io = |e| Error::Io {
            path: "softmax_eval.csv".into(),
            source: e,
        };
        writeln!(
            buf,
            "n,qi,qo,tokens,logit_std,n_e,argmax_rate,mean_l1,p99_l1,max_l1,base_adjust_exact_rate"
        )
        .map_err(io)?;
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{},{},{},{}",
            sweep.len,
            cfg.qi,
            cfg.qo,
            eval.tokens,
            sweep.logit_std,
            sweep.n_e,
            eval.argmax_preserved as f64 / eval.tokens as f64,
            eval.mean_l1,
            eval.p99_l1,
            eval.max_l1,
            eval.base_adjust_exact as f64 / eval.base_adjust_checked.max(1) as f64
        )
        .map_err(io)
    })?;
    out.write_json("softmax_eval.json", &json!({ "sweep": sweep, "eval": eval }))?;
    let result = json!({ "sweep": sweep, "eval": eval, "mean_l1_within_0_05": eval.mean_l1 <= 0.05 });
    finish("softmax-eval", cfg, out, args.common.format, result)
}

pub fn montecarlo(args: MonteCarloArgs) -> Result<()> {
    let cfg = args.common.resolve(None)?;
    let results = monte_carlo_sawl(cfg.sigma, &args.sawls, args.trials, cfg.seed, cfg.exec)?;
    let selected = results.iter().filter(|r| r.passes_six_sigma()).map(|r| r.sawl).max();
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write("montecarlo.csv", |buf| write_mc_csv(buf, &results))?;
    let rows: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "sawl": r.sawl,
                "trials": r.trials,
                "errors": r.errors,
                "error_rate": r.error_rate,
                "analytic_error_rate": r.analytic_error_rate,
                "standard_error": r.standard_error(),
                // infinite for a noiseless cell, which JSON cannot hold
                "sigma_equivalent": r.sigma_equivalent.is_finite().then_some(r.sigma_equivalent),
                "passes_six_sigma": r.passes_six_sigma(),
            })
        })
        .collect();
    let result = json!({ "results": rows, "largest_passing_sawl": selected });
    out.write_json("montecarlo.json", &result)?;
    finish("montecarlo", cfg, out, args.common.format, result)
}

pub fn traffic(args: TrafficArgs) -> Result<()> {
    let cfg = args.common.resolve(args.shape)?;
    let s = cfg.shape;
    let (orig, rev) = (traffic_original(&s), traffic_revised(&s));
    let dense = dense_gemm_cycles(s.hidden as u64, s.tokens as u64, cfg.ibp as u64, cfg.sawl as u64);
    let result = json!({
        "original": orig,
        "revised": rev,
        "original_total": orig.total(),
        "revised_total": rev.total(),
        "ratio": orig.total() as f64 / rev.total() as f64,
        "dense_gemm_cycles": dense,
        "dense_gemm_ms": dense as f64 * cfg.cycle_ns * 1e-6,
    });
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write_json("traffic.json", &result)?;
    finish("traffic", cfg, out, args.common.format, result)
}

pub fn lut(args: LutArgs) -> Result<()> {
    let cfg = args.common.resolve(None)?;
    let lut = build_lut(cfg.qi, cfg.n_e_max)?;
    let mut out = OutDir::new(cfg.out.as_deref())?;
    out.write("lut.bin", |buf| {
        buf.extend_from_slice(&lut.to_bytes());
        Ok(())
    })?;
    let result = json!({ "bytes": lut.to_bytes().len(), "entries": lut.entries() });
    out.write_json("lut.json", &result)?;
    finish("lut", cfg, out, args.common.format, result)
}
