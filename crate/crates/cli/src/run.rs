use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use rqc_core::circuit::{generate_circuit, Circuit, CircuitSpec, Variant};
use rqc_core::cost::{cost_table, cost_table_csv, CostParams};
use rqc_core::cut::{count_paths, plan_cut, Cut};
use rqc_core::formats::{
    parse_bitstring, prob_rows, read_bitstrings_text, write_amplitudes_csv, write_bitstrings_binary,
    write_bitstrings_text, REPORT_SCHEMA_VERSION,
};
use rqc_core::layout::QubitLayout;
use rqc_core::noise::depolarizing_sample;
use rqc_core::sfa::{selected_paths, sfa_all_amplitudes, sfa_amplitudes, sfa_sample, PathOrder, PathSpace, SfaOptions};
use rqc_core::statevec::{check_memory, probabilities, sample_from_probabilities, simulate, simulate_f32, Precision};
use rqc_core::stats::{bootstrap, histogram_with_theory, ks_test, mean, pt_pdf_and_cdf, PtFamily};
use rqc_core::xeb::{estimate, speckle_purity, Estimator, ProbSample};
use rqc_core::C64;

use crate::args::*;
use crate::error::{CliError, Result};

pub fn run(cfg: &RunConfig) -> Result<()> {
    match &cfg.command {
        Command::Generate(a) => generate(a, cfg),
        Command::Simulate(a) => simulate_cmd(a, cfg),
        Command::Xeb(a) => xeb(a, cfg),
        Command::Cost(a) => cost(a, cfg),
        Command::Replay(a) => replay(a, cfg.threads),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn emit_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable report") + "\n";
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Circuit::from_json(&text)?)
}

fn precision(p: PrecisionArg) -> Precision {
    match p {
        PrecisionArg::Single => Precision::Single,
        PrecisionArg::Double => Precision::Double,
    }
}

/// `None` for the layout's default partition.
fn parse_partition(cut: Option<&str>) -> Result<Option<Vec<usize>>> {
    match cut {
        None | Some("default") => Ok(None),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("bad qubit index `{t}` in --cut")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some),
    }
}

fn path_summary(circuit: &Circuit, cut: &Cut) -> Value {
    let paths = count_paths(circuit, cut, true);
    let total = match u64::try_from(&paths) {
        Ok(x) => json!(x),
        Err(_) => json!(paths.to_string()),
    };
    json!({
        "partition_a": cut.partition_a,
        "cross_gates": cut.cross_gates.len(),
        "wedges": cut.wedges.len(),
        "total_paths": total,
    })
}

fn generate(a: &GenerateArgs, cfg: &RunConfig) -> Result<()> {
    let layout = QubitLayout::resolve(&a.layout)?;
    let variant = match a.variant {
        VariantArg::Full => Variant::Full,
        VariantArg::Elided => {
            Variant::Elided(a.k.ok_or_else(|| CliError::Usage("--variant elided requires --k".into()))?)
        }
        VariantArg::Patch => Variant::Patch,
    };
    let explicit = parse_partition(a.cut.as_deref())?;
    let mut spec = CircuitSpec::new(a.n, a.m, a.seed, &a.sequence)?.with_variant(variant);
    if let Some(p) = explicit.clone() {
        spec = spec.with_cut(p);
    }
    let circuit = generate_circuit(&spec, &layout)?;
    let mut w = create(&a.output)?;
    w.write_all(circuit.to_json_pretty().as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&a.output, e))?;

    let part = circuit.spec.cut.clone().or(explicit);
    let paths = match plan_cut(&circuit, &layout, part.as_deref()) {
        Ok(cut) => path_summary(&circuit, &cut),
        Err(e) if part.is_some() => return Err(e.into()),
        Err(_) => Value::Null,
    };
    emit_json(
        None,
        &json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "circuit": a.output,
            "n": circuit.n(),
            "m": circuit.m(),
            "variant": circuit.spec.variant,
            "single_qubit_gates": circuit.single_qubit_count(),
            "two_qubit_gates": circuit.two_qubit_count(),
            "paths": paths,
            "run_config": cfg,
        }),
    )
}

fn target_bitstrings(a: &SimulateArgs, n: usize) -> Result<Vec<u64>> {
    if let Some(path) = &a.bitstrings {
        let (len, bits) = read_bitstrings_text(open(path)?)?;
        if !bits.is_empty() && len != n {
            return Err(CliError::Usage(format!(
                "bitstrings have {len} bits but the circuit has {n} qubits"
            )));
        }
        return Ok(bits);
    }
    if let Some(k) = a.count {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        return Ok((0..k).map(|_| rng.random_range(0..1u64 << n)).collect());
    }
    check_memory(n)?;
    Ok((0..1u64 << n).collect())
}

fn write_samples(path: &Path, bits: &[u64], n: usize, format: SampleFormat) -> Result<()> {
    let mut w = create(path)?;
    match format {
        SampleFormat::Text => write_bitstrings_text(&mut w, bits, n)?,
        SampleFormat::Binary => write_bitstrings_binary(&mut w, bits)?,
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn simulate_cmd(a: &SimulateArgs, cfg: &RunConfig) -> Result<()> {
    let circuit = read_circuit(&a.circuit)?;
    let n = circuit.n();
    let start = Instant::now();
    let mut info = json!({});
    let rows = match a.engine {
        EngineArg::Sv => {
            if a.fidelity.is_some() && a.mode != ModeArg::Sample {
                return Err(CliError::Usage("--fidelity applies to sample mode".into()));
            }
            match a.mode {
                ModeArg::Amplitudes => {
                    let bits = target_bitstrings(a, n)?;
                    let amps: Vec<C64> = match a.precision {
                        PrecisionArg::Double => {
                            let sv = simulate(&circuit)?;
                            bits.iter().map(|&x| sv.amplitude(x)).collect()
                        }
                        PrecisionArg::Single => {
                            let sv = simulate_f32(&circuit)?;
                            bits.iter().map(|&x| sv.amplitude(x)).collect()
                        }
                    };
                    let mut w = create(&a.output)?;
                    write_amplitudes_csv(&mut w, &bits, &amps, n)?;
                    w.flush().map_err(|e| CliError::io(&a.output, e))?;
                    bits.len()
                }
                ModeArg::Sample => {
                    let count = a.count.unwrap_or(1000);
                    let probs = probabilities(&circuit, precision(a.precision))?;
                    let bits = match a.fidelity {
                        Some(f) => depolarizing_sample(&probs, f, count, a.seed)?,
                        None => sample_from_probabilities(&probs, count, a.seed),
                    };
                    write_samples(&a.output, &bits, n, a.format)?;
                    info = json!({ "fidelity": a.fidelity.unwrap_or(1.0) });
                    count
                }
            }
        }
        EngineArg::Sfa => {
            if a.precision == PrecisionArg::Single {
                return Err(CliError::Usage("the SFA engine runs in double precision only".into()));
            }
            if a.fidelity.is_some() {
                return Err(CliError::Usage("--fidelity applies to the state-vector engine".into()));
            }
            let layout = QubitLayout::resolve(a.layout.as_deref().unwrap_or(&circuit.layout_id))?;
            let part = parse_partition(a.cut.as_deref())?;
            let cut = plan_cut(&circuit, &layout, part.as_deref())?;
            let opts = SfaOptions {
                fraction: a.fraction,
                prefix_len: a.prefix,
                order: match a.order {
                    OrderArg::Index => PathOrder::Index,
                    OrderArg::Weight => PathOrder::Weight,
                },
                fuse_wedges: !a.no_fuse,
            };
            let (used, total) = selected_paths(&circuit, &cut, &opts)?;
            let space = PathSpace::new(&circuit, &cut, opts.fuse_wedges, opts.prefix_len)?;
            info = json!({
                "fraction": used as f64 / total as f64,
                "paths_used": used,
                "total_paths": total,
                "prefix_len": space.prefix_len,
                "cut": space.report(),
            });
            match a.mode {
                ModeArg::Amplitudes => {
                    let all = a.bitstrings.is_none() && a.count.is_none();
                    let (bits, res) = if all {
                        let res = sfa_all_amplitudes(&circuit, &cut, &opts)?;
                        ((0..1u64 << n).collect::<Vec<_>>(), res)
                    } else {
                        let bits = target_bitstrings(a, n)?;
                        let res = sfa_amplitudes(&circuit, &cut, &bits, &opts)?;
                        (bits, res)
                    };
                    let mut w = create(&a.output)?;
                    write_amplitudes_csv(&mut w, &bits, &res.amplitudes, n)?;
                    w.flush().map_err(|e| CliError::io(&a.output, e))?;
                    bits.len()
                }
                ModeArg::Sample => {
                    let count = a.count.unwrap_or(1000);
                    let bits = sfa_sample(&circuit, &cut, count, &opts, a.seed, a.ceiling)?;
                    write_samples(&a.output, &bits, n, a.format)?;
                    info["ceiling"] = json!(a.ceiling);
                    count
                }
            }
        }
    };
    let mut sidecar = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "engine": a.engine,
        "mode": a.mode,
        "n": n,
        "rows": rows,
        "output": a.output,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "run_config": cfg,
    });
    if let (Value::Object(s), Value::Object(i)) = (&mut sidecar, info) {
        s.extend(i);
    }
    emit_json(Some(&sidecar_path(&a.output)), &sidecar)
}

/// Streams a sample file, mapping each bitstring to its ideal probability.
fn sample_probs(path: &Path, format: SampleFormat, probs: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let check = |x: u64| -> Result<f64> {
        probs
            .get(x as usize)
            .copied()
            .ok_or_else(|| CliError::Usage(format!("sample {x} has more than {n} bits")))
    };
    let mut r = open(path)?;
    match format {
        SampleFormat::Text => {
            for line in r.lines() {
                let line = line.map_err(|e| CliError::io(path, e))?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                if t.len() != n {
                    return Err(CliError::Usage(format!(
                        "sample `{t}` has {} bits but the circuit has {n} qubits",
                        t.len()
                    )));
                }
                out.push(check(parse_bitstring(t)?)?);
            }
        }
        SampleFormat::Binary => {
            let mut buf = [0u8; 8];
            loop {
                match r.read_exact(&mut buf) {
                    Ok(()) => out.push(check(u64::from_le_bytes(buf))?),
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(CliError::io(path, e)),
                }
            }
        }
    }
    Ok(out)
}

fn ndjson_probs(path: &Path) -> Result<(usize, Vec<f64>)> {
    let mut n = None;
    let mut out = Vec::new();
    for row in prob_rows(open(path)?) {
        let row = row?;
        let len = row.bitstring.trim().len();
        match n {
            None => n = Some(len),
            Some(k) if k != len => {
                return Err(CliError::Usage(format!(
                    "bitstring `{}` has {len} bits, expected {k}",
                    row.bitstring
                )))
            }
            _ => {}
        }
        out.push(row.p_s);
    }
    Ok((n.unwrap_or(0), out))
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad probability `{t}` in {}", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_histogram(path: &Path, rows: &[[f64; 4]]) -> Result<()> {
    let mut w = create(path)?;
    let mut text = String::from("left,right,empirical,theory\n");
    for r in rows {
        text.push_str(&format!("{:e},{:e},{:e},{:e}\n", r[0], r[1], r[2], r[3]));
    }
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))
}

fn xeb(a: &XebArgs, cfg: &RunConfig) -> Result<()> {
    let mut report = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "run_config": cfg,
    });
    let input = match (&a.probs, &a.circuit, &a.samples) {
        (Some(p), _, _) => Some(ndjson_probs(p)?),
        (None, Some(c), Some(s)) => {
            let circuit = read_circuit(c)?;
            let n = circuit.n();
            let probs = probabilities(&circuit, precision(a.precision))?;
            let format = a.sample_format.unwrap_or(if s.extension().is_some_and(|e| e == "bin") {
                SampleFormat::Binary
            } else {
                SampleFormat::Text
            });
            Some((n, sample_probs(s, format, &probs, n)?))
        }
        (None, Some(_), None) => return Err(CliError::Usage("--circuit needs --samples".into())),
        _ => None,
    };
    if input.is_none() && a.purity.is_none() {
        return Err(CliError::Usage(
            "give --circuit with --samples, --probs, or --purity".into(),
        ));
    }
    if let Some((n, values)) = input {
        let sample = ProbSample::new("samples", n, values)?;
        let d = sample.dim();
        let estimates = a
            .estimators
            .iter()
            .map(|e| {
                estimate(
                    &sample,
                    match e {
                        EstimatorArg::Linear => Estimator::Linear,
                        EstimatorArg::Log => Estimator::Log,
                        EstimatorArg::Hog => Estimator::Hog,
                    },
                )
            })
            .collect::<rqc_core::Result<Vec<_>>>()?;
        let dp: Vec<f64> = sample.ideal_probs.iter().map(|p| d * p).collect();
        let f_hat = (mean(&dp) - 1.0).clamp(0.0, 1.0);
        let fitted = pt_pdf_and_cdf(PtFamily::Linear, f_hat)?;
        let null = pt_pdf_and_cdf(PtFamily::Linear, 0.0)?;
        report["n"] = json!(n);
        report["N_s"] = json!(sample.len());
        report["estimates"] = json!(estimates);
        report["ks"] = json!({
            "fidelity": f_hat,
            "vs_estimate": ks_test(&dp, |x| fitted.cdf(x))?,
            "vs_zero": ks_test(&dp, |x| null.cdf(x))?,
        });
        if let Some(b) = a.bootstrap {
            let centered: Vec<f64> = dp.iter().map(|x| x - 1.0).collect();
            let boot = bootstrap(&centered, b, mean, a.seed)?;
            report["bootstrap"] = json!({ "estimator": "linear", "resamples": b, "sigma": boot.sigma });
        }
        if let Some(dir) = &a.plots {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let lin = dir.join("hist_linear.csv");
            write_histogram(&lin, &histogram_with_theory(&dp, a.bins, 0.0, 10.0, &fitted))?;
            let logs: Vec<f64> = dp.iter().filter(|x| **x > 0.0).map(|x| x.ln()).collect();
            let log_theory = pt_pdf_and_cdf(PtFamily::Log, f_hat)?;
            let lg = dir.join("hist_log.csv");
            write_histogram(&lg, &histogram_with_theory(&logs, a.bins, -10.0, 3.0, &log_theory))?;
            report["histograms"] = json!([lin, lg]);
        }
    }
    if let Some(path) = &a.purity {
        let table = read_table(path)?;
        let est = speckle_purity(&table)?;
        report["purity"] = json!({
            "instances": table.len(),
            "dim": est.dim,
            "purity": est.purity,
            "sqrt_purity": est.sqrt_purity,
        });
    }
    emit_json(a.output.as_deref(), &report)
}

fn parse_range(s: &str, flag: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad {flag} value `{s}`; use `a..b` or `a,b,c`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    let v = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    if v.contains(&0) {
        return Err(bad());
    }
    Ok(v)
}

fn cost(a: &CostArgs, cfg: &RunConfig) -> Result<()> {
    let ns = parse_range(&a.n, "--n")?;
    let ms = parse_range(&a.m, "--m")?;
    let params = CostParams::default();
    let rows = cost_table(&ns, &ms, a.cores, &params);
    match a.format {
        TableFormat::Csv => {
            let text = cost_table_csv(&rows);
            match &a.output {
                Some(p) => std::fs::write(p, text).map_err(|e| CliError::io(p, e)),
                None => std::io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
            }
        }
        TableFormat::Json => emit_json(
            a.output.as_deref(),
            &json!({
                "schema_version": REPORT_SCHEMA_VERSION,
                "params": params,
                "cores": a.cores,
                "rows": rows,
                "run_config": cfg,
            }),
        ),
    }
}

fn replay(a: &ReplayArgs, threads: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| CliError::io(&a.config, e))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if let Some(inner) = value.get_mut("run_config") {
        value = inner.take();
    }
    let mut cfg: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    if matches!(cfg.command, Command::Replay(_)) {
        return Err(CliError::Usage("a replay config cannot itself be a replay".into()));
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    run(&cfg)
}
