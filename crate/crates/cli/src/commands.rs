//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use otprox::io::{write_pgm, Matrix};
use otprox::operators::{LinearOperator, ParallelGeometry, RayTransform};
use otprox::prox::ProxFunction;
use otprox::splitting::{douglas_rachford_solve, IterationRecord};
use otprox::tomo::{self, ExperimentConfig, Method};
use otprox::transport::{
    apply_plan, build_cost, sinkhorn, transport_cost, DualPotentials, GridSpec, KernelOperator,
    PlanDirection, SinkhornSettings,
};

use crate::config::ConfigFile;
use crate::manifest::RunManifest;
use crate::{CliError, FlowArgs, GeometryArgs, PhantomArgs, ProjectArgs, ReconstructArgs, TransportArgs};

const DEFAULT_WARP: f64 = 0.06;
/// Relative mass mismatch tolerated (and corrected) when rerunning Sinkhorn
/// between a prior and a transported image.
const FLOW_MASS_TOL: f64 = 1e-6;

fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    Matrix::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_matrix(m: &Matrix, path: &Path) -> Result<(), CliError> {
    m.write(path)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    base.with_extension(ext)
}

/// Writes `<base>.mat` and a `<base>.pgm` preview and records both.
fn write_image(m: &Matrix, base: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let mat = with_ext(base, "mat");
    write_matrix(m, &mat)?;
    let pgm = with_ext(base, "pgm");
    let scale = write_pgm(&pgm, m.rows, m.cols, &m.data)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", pgm.display())))?;
    manifest.output("matrix", &mat);
    manifest.output("preview", &pgm);
    manifest.metric("pgm_min", scale.min);
    manifest.metric("pgm_max", scale.max);
    Ok(())
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn angle_range(g: &GeometryArgs, file: &ConfigFile) -> Result<(f64, f64), CliError> {
    let pi = std::f64::consts::PI;
    Ok((
        file.pick(g.angle_min, "angle_min", pi / 4.0)?,
        file.pick(g.angle_max, "angle_max", 3.0 * pi / 4.0)?,
    ))
}

pub fn phantom(a: &PhantomArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("phantom");
    let size = file.pick(a.size, "size", 64)?;
    let kind: String = file.pick(a.kind.clone(), "kind", "shepp_logan".into())?;
    let warp = file.pick(a.warp, "warp", DEFAULT_WARP)?;
    manifest.config("size", size);
    manifest.config("kind", &kind);
    manifest.phase("rasterize");
    let image = match kind.as_str() {
        "shepp_logan" => tomo::shepp_logan(size)?,
        "warped_prior" => {
            manifest.config("warp", warp);
            tomo::warped_shepp_logan(size, warp)?
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown phantom kind '{other}' (expected shepp_logan or warped_prior)"
            )))
        }
    };
    manifest.phase("write");
    manifest.metric("mass", image.iter().sum::<f64>());
    write_image(&Matrix::new(size, size, image)?, &a.output, &mut manifest)?;
    manifest.write(&with_ext(&a.output, "json"))
}

pub fn project(a: &ProjectArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("project");
    let image = read_matrix(&a.image)?;
    let n_angles = file.pick(a.angles, "angles", 30)?;
    let n_lines = file.pick(a.lines, "lines", 100)?;
    let range = angle_range(&a.geometry, file)?;
    let noise = file.pick(a.noise, "noise", 0.05)?;
    let kappa_factor = file.pick(a.kappa_factor, "kappa_factor", 1.2)?;
    let seed = file.pick(a.seed, "seed", 1)?;
    manifest.seed = Some(seed);
    manifest.config("image", a.image.display().to_string());
    manifest.config("angles", n_angles);
    manifest.config("lines", n_lines);
    manifest.config("angle_min", range.0);
    manifest.config("angle_max", range.1);
    manifest.config("noise", noise);
    manifest.config("kappa_factor", kappa_factor);

    manifest.phase("geometry");
    let geom = ParallelGeometry::new(image.rows, image.cols, n_angles, range, n_lines)?;
    let ray = RayTransform::new(geom)?;
    manifest.phase("simulate");
    let (b, kappa) = tomo::simulate_data(&image.data, &ray, noise, kappa_factor, seed)?;
    let clean = ray.apply(&image.data)?;
    manifest.metric("kappa", kappa);
    manifest.metric("clean_norm", norm2(&clean));
    manifest.metric("noise_norm", distance(&b, &clean));
    manifest.phase("write");
    write_image(&Matrix::new(n_angles, n_lines, b)?, &a.output, &mut manifest)?;
    manifest.write(&with_ext(&a.output, "json"))
}

/// κ recorded by `project` in the manifest next to the data file.
fn kappa_from_manifest(data: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(with_ext(data, "json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("metrics")?.get("kappa")?.as_f64()
}

pub fn reconstruct(a: &ReconstructArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("reconstruct");
    let method: Method = file
        .pick(a.method.clone(), "method", "tv".to_string())?
        .parse()?;
    manifest.phase("read");
    let data = read_matrix(&a.data)?;
    let prior = a.prior.as_deref().map(read_matrix).transpose()?;
    let truth = a.phantom.as_deref().map(read_matrix).transpose()?;
    if method.needs_prior() && prior.is_none() {
        return Err(CliError::Config(format!(
            "method {method} requires --prior <file>"
        )));
    }
    let inferred = prior.as_ref().or(truth.as_ref()).map(|m| m.rows).unwrap_or(64);
    let size = file.pick(a.size, "size", inferred)?;
    for (name, m) in [("prior", &prior), ("phantom", &truth)] {
        if let Some(m) = m {
            if m.rows != size || m.cols != size {
                return Err(CliError::Config(format!(
                    "{name} is {}x{}, expected {size}x{size}",
                    m.rows, m.cols
                )));
            }
        }
    }

    let mut c = ExperimentConfig::defaults(method);
    c.image_size = size;
    c.n_angles = data.rows;
    c.n_lines = data.cols;
    c.angle_range = angle_range(&a.geometry, file)?;
    c.gamma = file.pick(a.gamma, "gamma", c.gamma)?;
    c.epsilon = file.pick(a.epsilon, "epsilon", c.epsilon)?;
    c.tau = file.pick(a.tau, "tau", c.tau)?;
    c.lambda = file.pick(a.lambda, "lambda", c.lambda)?;
    c.outer_iters = file.pick(a.iters, "iters", c.outer_iters)?;
    c.outer_tol = file.pick(a.tol, "tol", c.outer_tol)?;
    c.inner_iters = file.pick(a.inner_iters, "inner_iters", c.inner_iters)?;
    c.inner_tol = file.pick(a.inner_tol, "inner_tol", c.inner_tol)?;
    c.truncation = file.pick(a.truncation, "truncation", c.truncation)?;
    c.fbp_filter = file.pick(a.filter, "filter", c.fbp_filter)?;
    c.seed = file.pick(a.seed, "seed", c.seed)?;
    c.validate()?;
    manifest.seed = Some(c.seed);
    manifest.config("method", method.as_str());
    manifest.config("data", a.data.display().to_string());
    manifest.config("size", c.image_size);
    manifest.config("angles", c.n_angles);
    manifest.config("lines", c.n_lines);
    manifest.config("angle_min", c.angle_range.0);
    manifest.config("angle_max", c.angle_range.1);
    manifest.config("gamma", c.gamma);
    manifest.config("epsilon", c.epsilon);
    manifest.config("tau", c.tau);
    manifest.config("lambda", c.lambda);
    manifest.config("iters", c.outer_iters);
    manifest.config("tol", c.outer_tol);
    manifest.config("inner_iters", c.inner_iters);
    manifest.config("inner_tol", c.inner_tol);
    manifest.config("truncation", c.truncation);
    manifest.config("filter", c.fbp_filter);

    manifest.phase("geometry");
    let ray = Arc::new(c.ray_transform()?);
    let b = data.data;
    let mut rows = Vec::new();
    let mut potentials = None;
    let mut used_prior = None;

    let image = if method == Method::Fbp {
        manifest.phase("fbp");
        tomo::fbp(&b, &ray, c.fbp_filter)?
    } else {
        let kappa = match file.pick_opt(a.kappa, "kappa")? {
            Some(k) => k,
            None => kappa_from_manifest(&a.data).ok_or_else(|| {
                CliError::Config(
                    "no --kappa given and the data manifest does not record one".into(),
                )
            })?,
        };
        manifest.config("kappa", kappa);
        manifest.metric("kappa", kappa);
        let prepared = match &prior {
            Some(p) if method.needs_prior() => Some(tomo::prepare_prior(&p.data, &ray, &b)?),
            _ => None,
        };
        manifest.phase("assemble");
        let (mut problem, params) =
            tomo::assemble_problem(&c, ray.clone(), &b, kappa, prepared.as_deref())?;
        manifest.phase("solve");
        let mut observer = |r: &IterationRecord| {
            rows.push((
                r.iteration,
                r.objective,
                r.fixed_point_residual,
                r.term_residuals.last().copied().unwrap_or(f64::NAN),
            ));
        };
        let result = douglas_rachford_solve(&mut problem, &params, Some(&mut observer))?;
        manifest.metric("iterations", result.iterations);
        manifest.metric("converged", result.converged);
        manifest.metric("objective", result.objective);
        manifest.metric("constraint_violation", result.constraint_residual);
        if let ProxFunction::Omt(term) = &problem.f {
            potentials = term.warm.clone();
        }
        used_prior = prepared;
        result.solution
    };

    manifest.phase("metrics");
    let residual = distance(&ray.apply(&image)?, &b);
    manifest.metric("data_residual", residual);
    manifest.metric("mass", image.iter().sum::<f64>());
    if let Some(t) = &truth {
        manifest.metric("relative_error", distance(&image, &t.data) / norm2(&t.data));
    }
    if let Some(p) = &used_prior {
        manifest.metric("distance_to_prior", distance(&image, p));
    }

    manifest.phase("write");
    write_image(&Matrix::new(size, size, image)?, &a.output, &mut manifest)?;
    if !rows.is_empty() {
        let csv = with_ext(&a.output, "csv");
        let mut text = String::from("iteration,objective,fixed_point_residual,data_residual\n");
        for (it, obj, fp, dr) in &rows {
            let _ = writeln!(text, "{it},{obj:e},{fp:e},{dr:e}");
        }
        std::fs::write(&csv, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv.display())))?;
        manifest.output("convergence", &csv);
    }
    if let Some(pot) = potentials {
        let path = a.output.with_extension("potentials.mat");
        let n = pot.lambda0.len();
        let mut data = pot.lambda0;
        data.extend(pot.lambda1);
        write_matrix(&Matrix::new(2, n, data)?, &path)?;
        manifest.output("potentials", &path);
    }
    if let Some(p) = &used_prior {
        let path = a.output.with_extension("prior.mat");
        write_matrix(&Matrix::new(size, size, p.clone())?, &path)?;
        manifest.output("prepared_prior", &path);
    }
    manifest.write(&with_ext(&a.output, "json"))
}

fn grid_kernel(rows: usize, cols: usize, power: f64, truncation: f64, epsilon: f64) -> Result<KernelOperator, CliError> {
    let grid = GridSpec::new(vec![rows, cols], vec![1.0, 1.0])?;
    Ok(KernelOperator::new(build_cost(grid, power, truncation)?, epsilon)?)
}

pub fn transport(a: &TransportArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("transport");
    let epsilon = file.pick(a.epsilon, "epsilon", 1.0)?;
    let truncation = file.pick(a.truncation, "truncation", 20.0)?;
    let power = file.pick(a.power, "power", 2.0)?;
    let tol = file.pick(a.tol, "tol", 1e-10)?;
    let max_iter = file.pick(a.max_iter, "max_iter", 10_000)?;
    for (k, v) in [("epsilon", epsilon), ("truncation", truncation), ("power", power), ("tol", tol)] {
        manifest.config(k, v);
    }
    manifest.config("max_iter", max_iter);
    manifest.phase("read");
    let mu0 = read_matrix(&a.mu0)?;
    let mu1 = read_matrix(&a.mu1)?;
    if (mu0.rows, mu0.cols) != (mu1.rows, mu1.cols) {
        return Err(CliError::Config(format!(
            "images differ in shape: {}x{} vs {}x{}",
            mu0.rows, mu0.cols, mu1.rows, mu1.cols
        )));
    }
    manifest.phase("sinkhorn");
    let kernel = grid_kernel(mu0.rows, mu0.cols, power, truncation, epsilon)?;
    let settings = SinkhornSettings::with_tol(tol, max_iter);
    let (pot, report) = sinkhorn(&mu0.data, &mu1.data, &kernel, &settings, None)?;
    let cost = transport_cost(&kernel, &pot)?;
    let gap = report.primal_value - report.dual_value;
    manifest.metric("primal", report.primal_value);
    manifest.metric("dual", report.dual_value);
    manifest.metric("gap", gap);
    manifest.metric("relative_gap", gap.abs() / (1.0 + report.primal_value.abs()));
    manifest.metric("transport_cost", cost);
    manifest.metric("mass", mu0.data.iter().sum::<f64>());
    manifest.metric("iterations", report.iterations);
    manifest.metric("converged", report.converged);
    manifest.metric("marginal_residual", report.marginal_residual_row.max(report.marginal_residual_col_or_kkt));
    if !report.converged {
        log::warn!("sinkhorn did not reach tol {tol} in {max_iter} iterations");
    }
    match &a.output {
        Some(p) => manifest.write(p),
        None => {
            manifest.end_phase();
            let text = serde_json::to_string_pretty(&manifest)
                .map_err(|e| CliError::Io(format!("cannot serialize report: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}

pub fn flow(a: &FlowArgs, file: &ConfigFile) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("flow");
    let epsilon = file.pick(a.epsilon, "epsilon", 1.0)?;
    let truncation = file.pick(a.truncation, "truncation", 20.0)?;
    let tol = file.pick(a.tol, "tol", 1e-10)?;
    let max_iter = file.pick(a.max_iter, "max_iter", 10_000)?;
    manifest.config("epsilon", epsilon);
    manifest.config("truncation", truncation);
    manifest.phase("read");
    let prior = read_matrix(&a.prior)?;
    let mask = read_matrix(&a.mask)?;
    if (mask.rows, mask.cols) != (prior.rows, prior.cols) {
        return Err(CliError::Config("mask and prior differ in shape".into()));
    }
    let kernel = grid_kernel(prior.rows, prior.cols, 2.0, truncation, epsilon)?;
    let n = prior.data.len();
    let pot = match (&a.potentials, &a.target) {
        (Some(path), _) => {
            let m = read_matrix(path)?;
            if m.rows != 2 || m.cols != n {
                return Err(CliError::Config(format!(
                    "potentials must be 2x{n}, got {}x{}",
                    m.rows, m.cols
                )));
            }
            DualPotentials {
                lambda0: m.data[..n].to_vec(),
                lambda1: m.data[n..].to_vec(),
            }
        }
        (None, Some(path)) => {
            let target = read_matrix(path)?;
            if target.data.len() != n {
                return Err(CliError::Config("target and prior differ in shape".into()));
            }
            let (m0, m1) = (prior.data.iter().sum::<f64>(), target.data.iter().sum::<f64>());
            if (m0 - m1).abs() > FLOW_MASS_TOL * m0.abs() {
                return Err(otprox::Error::Model(format!(
                    "prior and target masses differ: {m0} vs {m1}"
                ))
                .into());
            }
            let target: Vec<f64> = target.data.iter().map(|v| v * m0 / m1).collect();
            manifest.phase("sinkhorn");
            let settings = SinkhornSettings::with_tol(tol, max_iter);
            let (pot, report) = sinkhorn(&prior.data, &target, &kernel, &settings, None)?;
            manifest.metric("sinkhorn_iterations", report.iterations);
            manifest.metric("sinkhorn_converged", report.converged);
            pot
        }
        (None, None) => {
            return Err(CliError::Config(
                "flow needs --potentials <file> or --target <file>".into(),
            ))
        }
    };
    manifest.phase("flow");
    let region: Vec<f64> = mask.data.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
    let image = apply_plan(&kernel, &pot, &region, PlanDirection::Forward)?;
    manifest.metric("flow_mass", image.iter().sum::<f64>());
    manifest.metric("region_pixels", region.iter().sum::<f64>());
    manifest.phase("write");
    write_image(&Matrix::new(prior.rows, prior.cols, image)?, &a.output, &mut manifest)?;
    manifest.write(&with_ext(&a.output, "json"))
}
