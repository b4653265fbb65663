//! One function per subcommand. Each returns the artifacts to write; `execute`
//! writes them and the manifest.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use cantor_core::diffusion::{
    heat_series, msd_monte_carlo, triadic_tree, vladimirov_direct, vladimirov_quotient,
    LocallyConstant,
};
use cantor_core::laplacian::{
    assemble, closed_form_eigenvalues, eigensolve, haar_function, SpectrumTable,
};
use cantor_core::spectral::{abscissa, box_dimension, measure, zeta_profile};
use cantor_core::tree::{build_ifs_tree, build_uniform_tree, validate};
use cantor_core::ultrametric::{embed, subdominant_ultrametric, BoundaryPath, FiniteMetric};
use cantor_core::{GeneratorTag, WeightedTree};
use serde_json::json;

use crate::output::{
    csv, json, manifest_path, num, read_manifest, write_artifacts, write_manifest, Artifact,
    Failure, JobOutput, Manifest, Outcome, OutputRecord,
};
use crate::{
    Command, DimArgs, EmbedArgs, Format, HeatArgs, MeasureArgs, MsdArgs, OutputArgs, ReplayArgs,
    SpectrumArgs, TreeCommand, TreeGenArgs, TreeKind, TreeValidateArgs, UltrametrizeArgs,
    VladimirovArgs, ZetaArgs,
};

pub fn execute(command: Command) -> Outcome<()> {
    match command {
        Command::Replay(args) => replay(&args),
        job => finish(job, Instant::now()).map(|_| ()),
    }
}

fn finish(job: Command, start: Instant) -> Outcome<Vec<OutputRecord>> {
    let out = run(&job)?;
    let records = write_artifacts(&out.artifacts)?;
    if let Some(main) = out.artifacts.first().and_then(|a| a.path.as_ref()) {
        let manifest = Manifest {
            tool: "cantor".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            job,
            tree_hash: out.tree_hash,
            seed: out.seed,
            params: out.params,
            wall_time_s: start.elapsed().as_secs_f64(),
            outputs: records.clone(),
        };
        write_manifest(&manifest_path(main), &manifest)?;
    }
    match out.diagnostic {
        Some(f) => Err(f),
        None => Ok(records),
    }
}

fn replay(args: &ReplayArgs) -> Outcome<()> {
    let recorded = read_manifest(&args.manifest)?;
    let mut job = recorded.job.clone();
    if let Some(p) = &args.out {
        match main_out(&mut job) {
            Some(slot) => *slot = Some(p.clone()),
            None => return Err(Failure::validation(anyhow!("a replay cannot be replayed"))),
        }
    }
    let records = finish(job, Instant::now())?;
    if records.len() != recorded.outputs.len() {
        return Err(Failure::numeric(anyhow!(
            "replay wrote {} files, the manifest lists {}",
            records.len(),
            recorded.outputs.len()
        )));
    }
    for (new, old) in records.iter().zip(&recorded.outputs) {
        if new.sha256 != old.sha256 {
            return Err(Failure::numeric(anyhow!(
                "{} differs from the recorded {}",
                new.path.display(),
                old.path.display()
            )));
        }
    }
    eprintln!("replay: {} file(s) byte-identical", records.len());
    Ok(())
}

fn main_out(job: &mut Command) -> Option<&mut Option<PathBuf>> {
    Some(match job {
        Command::Tree(TreeCommand::Gen(a)) => &mut a.output.out,
        Command::Tree(TreeCommand::Validate(a)) => &mut a.output.out,
        Command::Zeta(a) => &mut a.output.out,
        Command::Dim(a) => &mut a.output.out,
        Command::Measure(a) => &mut a.output.out,
        Command::Spectrum(a) => &mut a.output.out,
        Command::Heat(a) => &mut a.output.out,
        Command::Msd(a) => &mut a.output.out,
        Command::Vladimirov(a) => &mut a.output.out,
        Command::Embed(a) => &mut a.output.out,
        Command::Ultrametrize(a) => &mut a.out,
        Command::Replay(_) => return None,
    })
}

fn run(job: &Command) -> Outcome<JobOutput> {
    match job {
        Command::Tree(TreeCommand::Gen(a)) => tree_gen(a),
        Command::Tree(TreeCommand::Validate(a)) => tree_validate(a),
        Command::Zeta(a) => zeta_cmd(a),
        Command::Dim(a) => dim_cmd(a),
        Command::Measure(a) => measure_cmd(a),
        Command::Spectrum(a) => spectrum_cmd(a),
        Command::Heat(a) => heat_cmd(a),
        Command::Msd(a) => msd_cmd(a),
        Command::Vladimirov(a) => vladimirov_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Ultrametrize(a) => ultrametrize_cmd(a),
        Command::Replay(_) => Err(Failure::validation(anyhow!("nested replay"))),
    }
}

fn bad(msg: impl std::fmt::Display) -> Failure {
    Failure::validation(anyhow!("{msg}"))
}

/// Reals, with `a/b` fractions so that exact ratios like 1/3 survive.
fn parse_real(s: &str) -> Outcome<f64> {
    let s = s.trim();
    let parsed = match s.split_once('/') {
        Some((a, b)) => a
            .trim()
            .parse::<f64>()
            .ok()
            .zip(b.trim().parse::<f64>().ok())
            .map(|(a, b)| a / b),
        None => s.parse::<f64>().ok(),
    };
    parsed.ok_or_else(|| bad(format!("not a number: {s:?}")))
}

fn parse_list(s: &str) -> Outcome<Vec<f64>> {
    s.split(',').map(parse_real).collect()
}

/// `s0`, `s0+x`, `s0-x` or a plain number.
fn resolve_s(spec: &str, s0: f64) -> Outcome<f64> {
    let spec = spec.trim();
    match spec.strip_prefix("s0") {
        Some("") => Ok(s0),
        Some(rest) => match rest.split_at(1) {
            ("+", x) => Ok(s0 + parse_real(x)?),
            ("-", x) => Ok(s0 - parse_real(x)?),
            _ => Err(bad(format!("cannot read {spec:?} as s0±x"))),
        },
        None => parse_real(spec),
    }
}

/// `log:a:b:n`, `lin:a:b:n` (endpoints included) or a comma list.
fn parse_grid(spec: &str, value: impl Fn(&str) -> Outcome<f64>) -> Outcome<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [kind @ ("log" | "lin"), a, b, n] => {
            let (a, b) = (value(a)?, value(b)?);
            let n: usize = n.parse().map_err(|_| bad(format!("grid size {n:?}")))?;
            if n == 0 {
                return Err(bad("empty grid"));
            }
            if *kind == "log" && !(a > 0.0 && b > 0.0) {
                return Err(bad("log grids need positive bounds"));
            }
            let frac = |i: usize| {
                if n == 1 {
                    0.0
                } else {
                    i as f64 / (n - 1) as f64
                }
            };
            Ok((0..n)
                .map(|i| match *kind {
                    "log" => 10f64.powf(a.log10() + (b.log10() - a.log10()) * frac(i)),
                    _ => a + (b - a) * frac(i),
                })
                .collect())
        }
        [_] => spec.split(',').map(value).collect(),
        _ => Err(bad(format!("cannot read grid {spec:?}"))),
    }
}

/// A tree file, or `triadic:N`, `uniform:B:R:N`, `ifs:r1,r2,...:N`.
fn read_tree(spec: &str) -> Outcome<WeightedTree> {
    let path = Path::new(spec);
    if path.exists() {
        return WeightedTree::load_json(path).map_err(|e| {
            let mut f = Failure::from(e);
            f.error = f.error.context(format!("loading {spec}"));
            f
        });
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let depth = |s: &str| s.parse::<u32>().map_err(|_| bad(format!("depth {s:?}")));
    let tree = match parts.as_slice() {
        ["triadic", n] => triadic_tree(depth(n)?)?,
        ["uniform", b, r, n] => {
            let b = b
                .parse::<u32>()
                .map_err(|_| bad(format!("branching {b:?}")))?;
            build_uniform_tree(b, parse_real(r)?, depth(n)?)?
        }
        ["ifs", rs, n] => build_ifs_tree(&parse_list(rs)?, depth(n)?)?,
        _ => return Err(Failure::io(anyhow!("tree file {spec} not found"))),
    };
    Ok(tree)
}

fn load_tree(spec: &str) -> Outcome<WeightedTree> {
    let tree = read_tree(spec)?;
    let report = validate(&tree);
    if report.is_valid() {
        Ok(tree)
    } else {
        Err(Failure::invalid_tree(report))
    }
}

fn is_triadic(tree: &WeightedTree) -> bool {
    matches!(tree.generator_tag(), GeneratorTag::Uniform { branching: 2, ratio } if *ratio == 1.0 / 3.0)
}

fn emit(
    output: &OutputArgs,
    csv_text: impl FnOnce() -> String,
    json_text: impl FnOnce() -> Outcome<String>,
) -> Outcome<JobOutput> {
    let contents = match output.format {
        Format::Csv => csv_text(),
        Format::Json => json_text()?,
    };
    Ok(JobOutput::single(output.out.clone(), contents))
}

fn tree_gen(a: &TreeGenArgs) -> Outcome<JobOutput> {
    let tree = match a.kind {
        TreeKind::Uniform => {
            let (b, r) = a
                .params
                .split_once(',')
                .ok_or_else(|| bad("uniform params are \"branching,ratio\""))?;
            let b = b
                .trim()
                .parse::<u32>()
                .map_err(|_| bad(format!("branching {b:?}")))?;
            build_uniform_tree(b, parse_real(r)?, a.depth)?
        }
        TreeKind::Ifs => build_ifs_tree(&parse_list(&a.params)?, a.depth)?,
    };
    let mut text = tree.to_json_string()?;
    text.push('\n');
    Ok(JobOutput::single(a.output.out.clone(), text).tree_hash(tree.content_hash()))
}

fn tree_validate(a: &TreeValidateArgs) -> Outcome<JobOutput> {
    let tree = read_tree(&a.tree)?;
    let report = validate(&tree);
    let mut out =
        JobOutput::single(a.output.out.clone(), json(&report)?).tree_hash(tree.content_hash());
    if !report.is_valid() {
        out.diagnostic = Some(Failure::invalid_tree(report));
    }
    Ok(out)
}

fn zeta_cmd(a: &ZetaArgs) -> Outcome<JobOutput> {
    let tree = load_tree(&a.tree)?;
    let s0 = abscissa(&tree)?;
    let mut points =
        a.s.iter()
            .map(|s| resolve_s(s, s0))
            .collect::<Outcome<Vec<f64>>>()?;
    if let Some(g) = &a.sgrid {
        points.extend(parse_grid(g, |x| resolve_s(x, s0))?);
    }
    if points.is_empty() {
        return Err(bad("give --s values or --sgrid"));
    }
    let profile = zeta_profile(&tree, &points)?;
    let rows = profile
        .s
        .iter()
        .zip(&profile.values)
        .map(|(&s, &z)| vec![num(s), num(z)]);
    Ok(
        emit(&a.output, || csv(&["s", "zeta"], rows), || json(&profile))?
            .tree_hash(tree.content_hash())
            .params(json!({ "s0": s0 })),
    )
}

fn dim_cmd(a: &DimArgs) -> Outcome<JobOutput> {
    let tree = load_tree(&a.tree)?;
    let s0 = abscissa(&tree)?;
    let boxdim = box_dimension(&tree)?;
    let estimator = if tree.generator_tag().is_self_similar() {
        "moran_exact"
    } else {
        "cumulative_multiplicity"
    };
    let value = json!({ "abscissa": s0, "box_dimension": boxdim, "estimator": estimator });
    Ok(emit(
        &a.output,
        || {
            csv(
                &["abscissa", "box_dimension", "estimator"],
                [vec![num(s0), num(boxdim), estimator.into()]],
            )
        },
        || json(&value),
    )?
    .tree_hash(tree.content_hash()))
}

fn measure_cmd(a: &MeasureArgs) -> Outcome<JobOutput> {
    let tree = load_tree(&a.tree)?;
    let mu = measure(&tree)?;
    let rows = (0..tree.len() as u32)
        .map(|v| vec![v.to_string(), tree.height(v).to_string(), num(mu.get(v))]);
    let mut out = emit(
        &a.output,
        || csv(&["vertex", "height", "mu"], rows),
        || json(&mu),
    )?
    .tree_hash(tree.content_hash())
    .params(json!({ "method": mu.method, "extrapolation": mu.extrapolation }));
    if let Some(r) = mu.extrapolation.as_ref().filter(|r| !r.reliable) {
        out.diagnostic = Some(Failure::numeric(anyhow!(
            "measure extrapolation is unstable (last two estimates differ by {:e})",
            r.stability
        )));
    }
    Ok(out)
}

fn spectrum_cmd(a: &SpectrumArgs) -> Outcome<JobOutput> {
    let tree = match &a.tree {
        Some(spec) => load_tree(spec)?,
        None => triadic_tree(a.depth)?,
    };
    let s0 = abscissa(&tree)?;
    let s = resolve_s(&a.s, s0)?;
    let hash = tree.content_hash();
    let table = if a.closed_form {
        if !is_triadic(&tree) {
            return Err(bad(
                "the closed form is only known for the triadic Cantor tree",
            ));
        }
        closed_form_eigenvalues(s, a.depth)?
    } else {
        let cache = a.cache_dir.as_ref().map(|dir| {
            dir.join(format!(
                "spectrum-{}-{:016x}-{}.json",
                &hash[..16],
                s.to_bits(),
                a.depth
            ))
        });
        match cache.as_ref().filter(|p| p.exists()) {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading cache {}", p.display()))
                    .map_err(Failure::io)?;
                serde_json::from_str::<SpectrumTable>(&text)
                    .with_context(|| format!("parsing cache {}", p.display()))
                    .map_err(Failure::io)?
            }
            None => {
                let mu = measure(&tree)?;
                let table = eigensolve(&assemble(&tree, &mu, s, a.depth)?)?;
                if let Some(p) = &cache {
                    fs::create_dir_all(p.parent().expect("cache files live in a directory"))
                        .and_then(|_| {
                            fs::write(p, serde_json::to_string(&table).expect("tables serialize"))
                        })
                        .with_context(|| format!("writing cache {}", p.display()))
                        .map_err(Failure::io)?;
                }
                table
            }
        }
    };
    let source = serde_json::to_value(table.source).expect("enums serialize");
    let source = source.as_str().unwrap_or_default().to_string();
    let rows = table
        .eigenvalues
        .iter()
        .zip(&table.multiplicities)
        .map(|(&l, &m)| vec![num(l), m.to_string(), source.clone()]);
    Ok(emit(
        &a.output,
        || csv(&["eigenvalue", "multiplicity", "source"], rows),
        || json(&table),
    )?
    .tree_hash(hash)
    .params(json!({ "s0": s0, "s": s })))
}

fn heat_cmd(a: &HeatArgs) -> Outcome<JobOutput> {
    let s0 = abscissa(&triadic_tree(1)?)?;
    let s = resolve_s(&a.s, s0)?;
    let series = heat_series(a.t, s, a.tol, a.levels)?;
    let rows = series
        .coefficients
        .iter()
        .zip(&series.level_probs)
        .enumerate()
        .map(|(n, (&c, &p))| vec![n.to_string(), num(c), num(p)]);
    Ok(emit(
        &a.output,
        || csv(&["n", "a_n", "p_n"], rows),
        || json(&series),
    )?
    .params(json!({
        "s0": s0,
        "s": s,
        "cutoff": series.cutoff,
        "tail_mass": series.tail_mass,
    })))
}

fn msd_cmd(a: &MsdArgs) -> Outcome<JobOutput> {
    let tree = triadic_tree(a.depth)?;
    let s0 = abscissa(&tree)?;
    let s = resolve_s(&a.s, s0)?;
    let grid = parse_grid(&a.tgrid, parse_real)?;
    let points = msd_monte_carlo(&tree, &grid, s, a.beta, a.paths, a.seed)?;
    let rows = points
        .iter()
        .map(|p| vec![num(p.t), num(p.analytic), num(p.mc_mean), num(p.mc_stderr)]);
    let mut out = emit(
        &a.output,
        || csv(&["t", "analytic", "mc_mean", "mc_stderr"], rows),
        || json(&points),
    )?
    .tree_hash(tree.content_hash())
    .params(json!({ "s0": s0, "s": s }));
    out.seed = Some(a.seed);
    Ok(out)
}

fn parse_function(spec: &str) -> Outcome<LocallyConstant> {
    match spec.split_once(':') {
        Some(("haar", word)) => {
            let omega = word
                .chars()
                .map(|c| match c {
                    '0' => Ok(0u8),
                    '1' => Ok(1u8),
                    _ => Err(bad(format!("ω must be binary, got {word:?}"))),
                })
                .collect::<Outcome<Vec<u8>>>()?;
            let depth = omega.len() as u32;
            Ok(LocallyConstant::new(
                depth,
                haar_function(&omega, depth)?.values,
            )?)
        }
        Some(("values", list)) => {
            let values = parse_list(list)?;
            if !values.len().is_power_of_two() {
                return Err(bad(format!(
                    "{} values is not a power of two",
                    values.len()
                )));
            }
            Ok(LocallyConstant::new(values.len().trailing_zeros(), values)?)
        }
        _ => Err(bad(format!(
            "function spec {spec:?}: use haar:<ω> or values:v0,v1,..."
        ))),
    }
}

fn vladimirov_cmd(a: &VladimirovArgs) -> Outcome<JobOutput> {
    let f = parse_function(&a.f)?;
    if a.depth < f.depth {
        return Err(bad(format!(
            "--depth {} is coarser than the function's level {}",
            a.depth, f.depth
        )));
    }
    let tree = triadic_tree(a.depth.max(1))?;
    let mu = measure(&tree)?;
    let op = assemble(&tree, &mu, 2.0, a.depth)?;
    let k = f.depth as usize;
    let mut rows = Vec::with_capacity(1 << k);
    let mut records = Vec::with_capacity(1 << k);
    for cyl in 0..1usize << k {
        let mut word: Vec<usize> = (0..k).map(|i| (cyl >> (k - 1 - i)) & 1).collect();
        word.resize(a.depth as usize, 0);
        let z = BoundaryPath::from_word(&tree, &word)?;
        let direct = vladimirov_direct(&tree, &f, &z)?;
        let quotient = vladimirov_quotient(&tree, &f, &z, f.depth, &op)?;
        let label: String = word[..k]
            .iter()
            .map(|b| char::from(b'0' + *b as u8))
            .collect();
        rows.push(vec![
            label.clone(),
            num(f.values[cyl]),
            num(direct),
            num(quotient),
        ]);
        records.push(json!({ "cylinder": label, "f": f.values[cyl], "direct": direct, "quotient": quotient }));
    }
    Ok(emit(
        &a.output,
        || csv(&["cylinder", "f", "direct", "quotient"], rows),
        || json(&records),
    )?
    .tree_hash(tree.content_hash()))
}

fn parse_word(s: &str) -> Outcome<Vec<usize>> {
    let digits: Vec<&str> = if s.contains('.') {
        s.split('.').collect()
    } else {
        s.split("").filter(|d| !d.is_empty()).collect()
    };
    digits
        .iter()
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| bad(format!("word {s:?}: {d:?} is not a child index")))
        })
        .collect()
}

fn embed_cmd(a: &EmbedArgs) -> Outcome<JobOutput> {
    let tree = load_tree(&a.tree)?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (i, w) in a.words.iter().enumerate() {
        let path = BoundaryPath::from_word(&tree, &parse_word(w)?)?;
        let e = embed(&tree, &path);
        for &(v, c) in &e.coords {
            rows.push(vec![
                i.to_string(),
                v.to_string(),
                tree.height(v).to_string(),
                num(c),
                num(e.tail_norm_sq),
            ]);
        }
        records.push(json!({ "word": w, "embedding": e }));
    }
    Ok(emit(
        &a.output,
        || {
            csv(
                &["point", "vertex", "height", "coordinate", "tail_norm_sq"],
                rows,
            )
        },
        || json(&records),
    )?
    .tree_hash(tree.content_hash()))
}

fn ultrametrize_cmd(a: &UltrametrizeArgs) -> Outcome<JobOutput> {
    let file = File::open(&a.metric)
        .with_context(|| format!("opening {}", a.metric.display()))
        .map_err(Failure::io)?;
    let dendrogram = subdominant_ultrametric(&FiniteMetric::read_csv(file)?)?;
    let mut text = dendrogram.tree.to_json_string()?;
    text.push('\n');
    let mut out = JobOutput::single(a.out.clone(), text).tree_hash(dendrogram.tree.content_hash());
    if let Some(p) = &a.delta_out {
        let mut buf = Vec::new();
        dendrogram.delta.write_csv(&mut buf)?;
        out.artifacts.push(Artifact {
            path: Some(p.clone()),
            contents: String::from_utf8(buf).expect("CSV output is UTF-8"),
        });
    }
    Ok(out)
}
