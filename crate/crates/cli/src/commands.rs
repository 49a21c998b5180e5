//! Subcommand implementations. Each returns an [`Outcome`]; the dispatcher
//! turns it into a JSON document or a CSV table.

use fiberflow::bundle::Bundle;
use fiberflow::error::Error;
use fiberflow::field::{Potential, ScalarField, Section};
use fiberflow::geometry::{Manifold, Point};
use fiberflow::grammar;
use fiberflow::holonomy::inequality_suite;
use fiberflow::kato::{khasminskii_constants, khasminskii_empirical, kato_report, Verdict};
use fiberflow::linalg;
use fiberflow::montecarlo::Estimate;
use fiberflow::oracle;
use fiberflow::paths::exit_probability;
use fiberflow::semigroup::{
    continuity_scan, domination_check, fk_checkpoints, ground_energy, heat_norms, identity_check, perturbation_check,
    random_zonal_probes, resolvent_apply, smoothing_check, McSpec, Problem, LAGUERRE_NODES,
};
use serde_json::{json, Value};

use crate::config::{ConfigError, ConnectionKind, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Run(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid { key, msg } | Error::Parse { key, msg } => CliError::Config(ConfigError::new(key, msg)),
            e => CliError::Run(e),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Plot-ready table; written as CSV with `--format csv`.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub values: Value,
    pub stderr: Value,
    pub alive_fraction: Option<f64>,
    pub h: Option<f64>,
    pub n: Option<usize>,
    /// False when a checked inequality is violated (exit code 2).
    pub passed: bool,
    pub table: Table,
}

struct Setup {
    model: Manifold,
    bundle: Bundle,
    potential: Potential,
}

impl Setup {
    fn new(cfg: &RunConfig) -> CliResult<Self> {
        let model = grammar::parse_manifold(&cfg.manifold)?;
        let bundle = match cfg.connection {
            ConnectionKind::Trivial => Bundle::trivial(cfg.bundle_rank.unwrap_or(1)).map_err(key("bundle-rank"))?,
            ConnectionKind::Magnetic => {
                if cfg.bundle_rank.is_some_and(|r| r != 1) {
                    return Err(ConfigError::new("bundle-rank", "a magnetic line bundle has rank 1").into());
                }
                Bundle::magnetic(grammar::parse_beta(&model, cfg.beta.as_deref().unwrap_or("zero"))?)
            }
            ConnectionKind::LeviCivita => {
                let b = Bundle::levi_civita(&model).map_err(key("connection"))?;
                if cfg.bundle_rank.is_some_and(|r| r != b.rank()) {
                    return Err(ConfigError::new("bundle-rank", format!("the tangent bundle has rank {}", b.rank())).into());
                }
                b
            }
        };
        bundle.check_model(&model).map_err(key("connection"))?;
        let potential = grammar::parse_potential(&model, bundle.rank(), &cfg.potential)?;
        Ok(Setup { model, bundle, potential })
    }

    fn problem(&self) -> CliResult<Problem<'_>> {
        Problem::new(&self.model, &self.bundle, &self.potential).map_err(key("potential"))
    }

    fn rank(&self) -> usize {
        self.bundle.rank()
    }

    fn points(&self, cfg: &RunConfig) -> CliResult<Vec<Point>> {
        if let Some(g) = &cfg.x_grid {
            return Ok(grammar::parse_points(&self.model, "x-grid", g)?);
        }
        Ok(vec![self.point(cfg)?])
    }

    fn point(&self, cfg: &RunConfig) -> CliResult<Point> {
        match &cfg.x {
            Some(x) => Ok(grammar::parse_point(&self.model, "x", x)?),
            None => Ok(self.model.origin()),
        }
    }

    fn section(&self, cfg: &RunConfig, default: &str) -> CliResult<Section> {
        Ok(grammar::parse_section(&self.model, self.rank(), cfg.f.as_deref().unwrap_or(default))?)
    }

    fn h(&self, cfg: &RunConfig) -> f64 {
        cfg.h.unwrap_or_else(|| 1e-3f64.min(self.model.max_h()))
    }

    fn mc(&self, cfg: &RunConfig) -> McSpec {
        McSpec::new(self.h(cfg), cfg.n, cfg.seed).workers(cfg.workers)
    }
}

/// Re-key errors that carry no config key.
fn key(k: &'static str) -> impl Fn(Error) -> CliError {
    move |e| match e.key() {
        Some(_) => e.into(),
        None => CliError::Config(ConfigError::new(k, e.to_string())),
    }
}

fn estimate_json(e: &Estimate) -> Value {
    json!({
        "re": e.value.iter().map(|z| z.re).collect::<Vec<_>>(),
        "im": e.value.iter().map(|z| z.im).collect::<Vec<_>>(),
    })
}

fn finite(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn coords(p: &Point) -> Vec<f64> {
    p.coords().to_vec()
}

fn times(cfg: &RunConfig) -> CliResult<Vec<f64>> {
    match &cfg.t_grid {
        Some(g) => Ok(grammar::parse_times("t-grid", g)?),
        None => Ok(vec![cfg.require_t()?]),
    }
}

/// `[2, 4, inf]`: exponents `≥ 2`, with `inf` for the sup norm.
pub fn parse_exponents(s: &str) -> Result<Vec<f64>, ConfigError> {
    let body = s.trim().trim_start_matches('[').trim_end_matches(']');
    let qs = body
        .split(',')
        .map(|w| match w.trim() {
            "inf" | "infinity" => Ok(f64::INFINITY),
            w => w.parse::<f64>().map_err(|e| ConfigError::new("q", format!("`{w}`: {e}"))),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if qs.is_empty() {
        return Err(ConfigError::new("q", "empty exponent list"));
    }
    Ok(qs)
}

pub fn semigroup(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let f = st.section(cfg, "one")?;
    let ts = times(cfg)?;
    let mc = st.mc(cfg);
    let pts = st.points(cfg)?;
    let d = st.rank();
    let mut header: Vec<String> = (0..pts[0].len()).map(|i| format!("x{i}")).collect();
    header.push("t".into());
    for c in 0..d {
        header.extend([format!("re{c}"), format!("im{c}"), format!("stderr{c}")]);
    }
    header.extend(["floor".into(), "floorStderr".into(), "alive".into()]);
    let mut table = Table { header, rows: Vec::new() };
    let (mut vals, mut errs) = (Vec::new(), Vec::new());
    let (mut passed, mut alive) = (true, 1.0f64);
    for x in &pts {
        for (t, r) in ts.iter().zip(fk_checkpoints(&prob, &f, x, &ts, &mc)?) {
            passed &= r.domination.hits == 0;
            alive = alive.min(r.estimate.alive_fraction);
            let mut v = estimate_json(&r.estimate);
            v["x"] = json!(coords(x));
            v["t"] = json!(t);
            v["floor"] = json!(r.floor.re());
            v["dominationViolations"] = json!(r.domination.hits);
            vals.push(v);
            errs.push(json!({ "value": r.estimate.stderr, "floor": r.floor.se() }));
            let mut row = coords(x);
            row.push(*t);
            for (z, e) in r.estimate.value.iter().zip(&r.estimate.stderr) {
                row.extend([z.re, z.im, *e]);
            }
            row.extend([r.floor.re(), r.floor.se(), r.estimate.alive_fraction]);
            table.rows.push(row);
        }
    }
    Ok(Outcome {
        values: json!(vals),
        stderr: json!(errs),
        alive_fraction: Some(alive),
        h: Some(mc.h),
        n: Some(mc.n),
        passed,
        table,
    })
}

pub fn ground(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let euclidean = matches!(st.model.base(), Manifold::Euclidean { .. });
    let f1 = st.section(cfg, if euclidean { "ground" } else { "one" })?;
    let f2 = grammar::parse_section(&st.model, 1, "one")?;
    let grid = match &cfg.t_grid {
        Some(g) => grammar::parse_times("t-grid", g)?,
        None => {
            let tmax = cfg.tmax.ok_or_else(|| ConfigError::new("tmax", "missing required key (or give t-grid)"))?;
            (1..=6).map(|j| tmax * j as f64 / 6.0).collect()
        }
    };
    let mc = st.mc(cfg);
    let rep = ground_energy(&prob, &f1, &f2, cfg.r.unwrap_or(5.0), &grid, &mc)?;
    let mut table = Table::new(&["t", "logFunctional", "logStderr", "localRate"]);
    for j in 0..grid.len() {
        let rate = if j == 0 { f64::NAN } else { rep.local_rates[j - 1] };
        table.rows.push(vec![grid[j], rep.log_functional[j], rep.log_stderr[j], rate]);
    }
    Ok(Outcome {
        values: json!({
            "energy": rep.energy,
            "tGrid": rep.t_grid,
            "logFunctional": rep.log_functional,
            "localRates": rep.local_rates,
            "fitStart": rep.fit_start,
        }),
        stderr: json!({ "energy": rep.stderr, "logFunctional": rep.log_stderr }),
        alive_fraction: Some(rep.alive_fraction),
        h: Some(rep.h),
        n: Some(rep.n),
        passed: true,
        table,
    })
}

pub fn resolvent(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let f = st.section(cfg, "one")?;
    let lambda = cfg.lambda.ok_or_else(|| ConfigError::new("lambda", "missing required key"))?;
    let k = cfg.k.unwrap_or(1);
    let mc = st.mc(cfg);
    let d = st.rank();
    let pts = st.points(cfg)?;
    let mut header: Vec<String> = (0..pts[0].len()).map(|i| format!("x{i}")).collect();
    for c in 0..d {
        header.extend([format!("re{c}"), format!("im{c}"), format!("stderr{c}")]);
    }
    header.extend(["floor".into(), "tailShare".into()]);
    let mut table = Table { header, rows: Vec::new() };
    let (mut vals, mut errs) = (Vec::new(), Vec::new());
    let (mut passed, mut alive) = (true, 1.0f64);
    for x in &pts {
        let r = resolvent_apply(&prob, &f, x, k, lambda, LAGUERRE_NODES, None, &mc)?;
        passed &= r.domination.hits == 0;
        alive = alive.min(r.estimate.alive_fraction);
        let mut v = estimate_json(&r.estimate);
        v["x"] = json!(coords(x));
        v["floor"] = json!(r.floor.re());
        v["tailShare"] = json!(r.tail_share);
        v["diverging"] = json!(r.diverging);
        v["nodes"] = json!(r.nodes);
        v["dominationViolations"] = json!(r.domination.hits);
        vals.push(v);
        errs.push(json!({ "value": r.estimate.stderr, "floor": r.floor.se() }));
        let mut row = coords(x);
        for (z, e) in r.estimate.value.iter().zip(&r.estimate.stderr) {
            row.extend([z.re, z.im, *e]);
        }
        row.extend([r.floor.re(), r.tail_share]);
        table.rows.push(row);
    }
    Ok(Outcome { values: json!(vals), stderr: json!(errs), alive_fraction: Some(alive), h: Some(mc.h), n: Some(mc.n), passed, table })
}

pub fn domination(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let f = st.section(cfg, "one")?;
    let t = cfg.require_t()?;
    let mc = st.mc(cfg);
    let mut table = Table::new(&["point", "violations", "maxExcess", "norm", "floor", "quadraticLhs", "quadraticRhs"]);
    let (mut vals, mut errs) = (Vec::new(), Vec::new());
    let (mut passed, mut alive) = (true, 1.0f64);
    for (i, x) in st.points(cfg)?.iter().enumerate() {
        let r = domination_check(&prob, &f, x, t, &mc)?;
        passed &= r.passed();
        alive = alive.min(r.value.alive_fraction);
        vals.push(json!({
            "x": coords(x),
            "samples": r.samples,
            "violations": r.violations,
            "maxExcess": finite(r.max_excess),
            "firstViolation": r.first_violation,
            "value": estimate_json(&r.value),
            "floor": r.floor.re(),
            "averagedHolds": r.averaged_holds,
            "quadraticLhs": r.quadratic_lhs,
            "quadraticRhs": r.quadratic_rhs,
            "quadraticHolds": r.quadratic_holds,
        }));
        errs.push(json!({ "value": r.value.stderr, "floor": r.floor.se() }));
        table.rows.push(vec![
            i as f64,
            r.violations as f64,
            r.max_excess,
            r.value.norm(),
            r.floor.re(),
            r.quadratic_lhs,
            r.quadratic_rhs,
        ]);
    }
    Ok(Outcome { values: json!(vals), stderr: json!(errs), alive_fraction: Some(alive), h: Some(mc.h), n: Some(mc.n), passed, table })
}

/// Six points `±R e_i` on the sphere: the default sup grid for the
/// Khas'minskii constant.
fn axis_points(model: &Manifold) -> CliResult<Vec<Point>> {
    let Manifold::Sphere2 { radius } = model else {
        return Ok(vec![model.origin()]);
    };
    let mut out = Vec::new();
    for i in 0..3 {
        for s in [1.0, -1.0] {
            let mut c = [0.0; 3];
            c[i] = s * radius;
            out.push(model.point(&c)?);
        }
    }
    Ok(out)
}

pub fn smoothing(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let t = cfg.require_t()?;
    let qs = parse_exponents(cfg.q.as_deref().unwrap_or("[2, 4, inf]"))?;
    let count = cfg.trials.unwrap_or(20);
    if st.rank() != 1 {
        return Err(ConfigError::new("bundle-rank", "smoothing probes are scalar; use rank 1").into());
    }
    let probes = random_zonal_probes(&st.model, count, cfg.seed).map_err(key("manifold"))?;
    let sections: Vec<Section> = probes.into_iter().map(|p| p.1).collect();
    let kato_grid = match &cfg.x_grid {
        Some(g) => grammar::parse_points(&st.model, "x-grid", g)?,
        None => axis_points(&st.model)?,
    };
    let norms = heat_norms(&st.model, t, 64)?;
    let mc = st.mc(cfg);
    let rep = smoothing_check(&prob, &sections, t, &qs, SMOOTHING_NODES, &kato_grid, &mc)?;
    let mut table = Table::new(&["probe", "q", "norm", "stderr", "bound"]);
    for p in &rep.probes {
        table.rows.push(vec![p.probe as f64, p.q, p.norm, p.stderr, p.bound]);
    }
    let passed = rep.passed() && norms.iter().all(|c| c.holds());
    Ok(Outcome {
        values: json!({
            "heatNorms": norms.iter().map(|c| json!({
                "p": finite(c.p), "q": finite(c.q), "computed": c.computed, "reference": c.reference,
                "bound": c.bound, "holds": c.holds(),
            })).collect::<Vec<_>>(),
            "cT": rep.c_t,
            "D": rep.d,
            "khasminskii": { "t0": rep.khasminskii.t0, "cT0": rep.khasminskii.c_t0, "cV": rep.khasminskii.cv },
            "probes": rep.probes.iter().map(|p| json!({
                "probe": p.probe, "q": finite(p.q), "norm": p.norm, "bound": p.bound, "holds": p.holds(),
            })).collect::<Vec<_>>(),
        }),
        stderr: json!(rep.probes.iter().map(|p| p.stderr).collect::<Vec<_>>()),
        alive_fraction: None,
        h: Some(mc.h),
        n: Some(mc.n),
        passed,
        table,
    })
}

/// Per-direction resolution of the volume rule used by `smoothing`
/// (`n × 2n` nodes on the sphere).
pub const SMOOTHING_NODES: usize = 8;

pub fn identity(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    let f = st.section(cfg, "one")?;
    let t = cfg.require_t()?;
    let s = cfg.s.ok_or_else(|| ConfigError::new("s", "missing required key"))?;
    let x = st.point(cfg)?;
    let mc = st.mc(cfg);
    let id = identity_check(&prob, &f, &x, s, t, &mc)?;
    if s > t {
        return Err(ConfigError::new("s", "perturbation split needs s ≤ t").into());
    }
    let pt = perturbation_check(&prob, &f, &x, s, t, &mc)?;
    let mut table = Table::new(&["side", "re0", "im0", "stderr0"]);
    for (j, e) in [&id.one_shot, &id.nested, &pt.left, &pt.right].iter().enumerate() {
        table.rows.push(vec![j as f64, e.value[0].re, e.value[0].im, e.stderr[0]]);
    }
    Ok(Outcome {
        values: json!({
            "identity": {
                "s": id.s, "t": id.t, "oneShot": estimate_json(&id.one_shot), "nested": estimate_json(&id.nested),
                "nOuter": id.n_outer, "nInner": id.n_inner, "withinError": id.within_error, "exact": id.exact,
            },
            "perturbation": {
                "s": pt.s, "t": pt.t, "left": estimate_json(&pt.left), "right": estimate_json(&pt.right),
                "withinError": pt.within_error, "boundViolations": pt.bound_violations,
                "boundChecked": pt.bound_checked, "exact": pt.exact,
            },
        }),
        stderr: json!({
            "identity": { "oneShot": id.one_shot.stderr, "nested": id.nested.stderr },
            "perturbation": { "left": pt.left.stderr, "right": pt.right.stderr },
        }),
        alive_fraction: Some(id.one_shot.alive_fraction),
        h: Some(mc.h),
        n: Some(mc.n),
        passed: id.passed() && pt.passed(),
        table,
    })
}

/// Steps per unit `s` in the continuity scan (`h_s = min(h, s/STEPS)`).
pub const CONTINUITY_STEPS: usize = 50;

pub fn continuity(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let prob = st.problem()?;
    // the global bound needs a declared L² norm
    let euclidean = matches!(st.model.base(), Manifold::Euclidean { .. });
    let f = st.section(cfg, if euclidean { "gaussian" } else { "one" })?;
    let t = cfg.require_t()?;
    let grid = match &cfg.x_grid {
        Some(g) => grammar::parse_points(&st.model, "x-grid", g)?,
        None => return Err(ConfigError::new("x-grid", "missing required key").into()),
    };
    let s_grid = match &cfg.t_grid {
        Some(g) => grammar::parse_times("t-grid", g)?,
        None => vec![1e-1, 1e-2, 1e-3],
    };
    let mc = st.mc(cfg);
    let rep = continuity_scan(&prob, &f, t, &grid, None, &s_grid, CONTINUITY_STEPS, &mc)?;
    let mut table = Table::new(&["s", "h", "sup", "stderr", "argmax"]);
    for c in &rep.samples {
        table.rows.push(vec![c.s, c.h, c.sup, c.stderr, c.argmax as f64]);
    }
    Ok(Outcome {
        values: json!({
            "samples": rep.samples.iter().map(|c| json!({ "s": c.s, "h": c.h, "sup": c.sup, "argmax": c.argmax })).collect::<Vec<_>>(),
            "monotone": rep.monotone,
            "small": rep.small,
            "bound": {
                "sup": rep.bound.sup, "bound": rep.bound.bound, "cT": rep.bound.c_t,
                "cV": rep.bound.khasminskii.cv, "holds": rep.bound.holds,
            },
        }),
        stderr: json!({
            "samples": rep.samples.iter().map(|c| c.stderr).collect::<Vec<_>>(),
            "boundSup": rep.bound.stderr,
        }),
        alive_fraction: None,
        h: Some(mc.h),
        n: Some(mc.n),
        passed: rep.passed(),
        table,
    })
}

/// `|V|` as a scalar field (operator norm for matrix potentials).
fn magnitude(p: &Potential) -> ScalarField {
    match p.as_scalar() {
        Some(v) => v.abs(),
        None => {
            let q = p.clone();
            ScalarField::new(format!("|{}|", p.description()), move |y: &Point| linalg::op_norm(&q.value(y)))
                .with_singular(p.singular_points().to_vec())
        }
    }
}

pub fn kato(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let v = magnitude(&st.potential);
    let grid = match &cfg.t_grid {
        Some(g) => grammar::parse_times("t-grid", g)?,
        None => vec![1.0, 1e-1, 1e-2, 1e-3, 1e-4],
    };
    let pts = st.points(cfg)?;
    let rep = kato_report(&st.model, &v, &grid, &pts)?;
    let mut table = Table::new(&["t", "supIntegral", "argmax", "refinement"]);
    for j in 0..grid.len() {
        table.rows.push(vec![grid[j], rep.sup_integral[j], rep.argmax[j] as f64, rep.refinement[j]]);
    }
    let mut values = json!({
        "tGrid": rep.t_grid,
        "supIntegral": rep.sup_integral.iter().map(|v| finite(*v)).collect::<Vec<_>>(),
        "argmax": rep.argmax,
        "refinement": rep.refinement,
        "fittedDecayExponent": rep.fitted_decay_exponent,
        "verdict": rep.verdict.to_string(),
        "khasminskii": Value::Null,
    });
    let mut stderr = json!({ "moments": Value::Null });
    let mut passed = rep.verdict == Verdict::KatoConsistent;
    let h = st.h(cfg);
    if passed && cfg.n > 0 {
        let t = cfg.t.unwrap_or(0.25);
        let c = khasminskii_constants(&st.model, &v, &pts, t)?;
        let checks = khasminskii_empirical(&st.model, &v, &c, &pts, &[t], h, cfg.n, cfg.seed, cfg.workers)?;
        passed &= checks.iter().all(|m| m.holds());
        values["khasminskii"] = json!({
            "t0": c.t0, "cT0": c.c_t0, "cV": c.cv, "prefactor": c.prefactor,
            "moments": checks.iter().map(|m| json!({
                "point": m.x, "t": m.t, "mean": m.mean, "bound": m.bound, "holds": m.holds(),
            })).collect::<Vec<_>>(),
        });
        stderr["moments"] = json!(checks.iter().map(|m| m.stderr).collect::<Vec<_>>());
    }
    Ok(Outcome { values, stderr, alive_fraction: None, h: Some(h), n: Some(cfg.n), passed, table })
}

pub fn exit_time(cfg: &RunConfig) -> CliResult<Outcome> {
    let st = Setup::new(cfg)?;
    let r = cfg.r.unwrap_or(1.0);
    let ts = times(cfg)?;
    let pts = st.points(cfg)?;
    let h = st.h(cfg);
    let o = st.model.origin();
    let rep = exit_probability(&st.model, &pts, &o, r, &ts, h, cfg.n, cfg.seed, cfg.workers)?;
    let line = matches!(st.model, Manifold::Euclidean { m: 1 });
    let mut table = Table::new(&["point", "t", "survival", "stderr", "reference"]);
    let mut passed = true;
    let mut refs = Vec::new();
    for (i, x) in pts.iter().enumerate() {
        // survival is nonincreasing in t on common paths
        passed &= rep.survival[i].windows(2).all(|w| w[1] <= w[0]);
        let at_centre = line && st.model.distance(&o, x) == 0.0;
        let mut row_refs = Vec::new();
        for j in 0..ts.len() {
            let reference = if at_centre { oracle::two_sided_survival(r, ts[j]) } else { f64::NAN };
            if reference.is_finite() {
                // the binomial error under the reference keeps the test meaningful when no path exits
                let null = (reference * (1.0 - reference) / cfg.n as f64).sqrt();
                passed &= (rep.survival[i][j] - reference).abs() <= 3.0 * rep.stderr[i][j].max(null);
            }
            row_refs.push(finite(reference));
            table.rows.push(vec![i as f64, ts[j], rep.survival[i][j], rep.stderr[i][j], reference]);
        }
        refs.push(row_refs);
    }
    Ok(Outcome {
        values: json!({
            "times": rep.times,
            "points": pts.iter().map(coords).collect::<Vec<_>>(),
            "survival": rep.survival,
            "inf": rep.inf,
            "reference": refs,
            "radius": r,
        }),
        stderr: json!(rep.stderr),
        alive_fraction: None,
        h: Some(h),
        n: Some(cfg.n),
        passed,
        table,
    })
}

/// Grid cells per unit time in the holonomy inequality suite.
pub const SUITE_STEPS: usize = 100;

pub fn validate_holonomy(cfg: &RunConfig) -> CliResult<Outcome> {
    let trials = cfg.trials.unwrap_or(200);
    let d = cfg.bundle_rank.unwrap_or(4);
    let t = cfg.t.unwrap_or(1.0);
    if t <= 0.0 {
        return Err(ConfigError::new("t", "need t > 0").into());
    }
    let steps = ((SUITE_STEPS as f64 * t).ceil() as usize).max(1);
    let rep = inequality_suite(trials, d, t, steps, cfg.seed)?;
    let mut names: Vec<&str> = rep.checks.iter().map(|c| c.name).collect();
    names.dedup();
    names.sort();
    names.dedup();
    let mut table = Table::new(&["trial", "lhs", "rhs", "holds"]);
    for c in &rep.checks {
        table.rows.push(vec![c.trial as f64, c.lhs, c.rhs, if c.holds() { 1.0 } else { 0.0 }]);
    }
    let by_name: serde_json::Map<String, Value> = names
        .iter()
        .map(|n| {
            let cs: Vec<_> = rep.checks.iter().filter(|c| c.name == *n).collect();
            let worst = cs.iter().map(|c| c.lhs - c.rhs).fold(f64::NEG_INFINITY, f64::max);
            let v = cs.iter().filter(|c| !c.holds()).count();
            (n.to_string(), json!({ "checks": cs.len(), "violations": v, "worstMargin": worst }))
        })
        .collect();
    let violations = rep.violations();
    Ok(Outcome {
        values: json!({
            "trials": rep.trials,
            "d": d,
            "t": t,
            "checks": rep.checks.len(),
            "violations": violations.len(),
            "byName": by_name,
            "firstViolation": violations.first().map(|c| json!({ "name": c.name, "trial": c.trial, "lhs": c.lhs, "rhs": c.rhs })),
        }),
        stderr: Value::Null,
        alive_fraction: None,
        h: None,
        n: None,
        passed: violations.is_empty(),
        table,
    })
}

pub fn validate_oracle(_cfg: &RunConfig) -> CliResult<Outcome> {
    let checks = oracle::validate()?;
    let mut table = Table::new(&["check", "value", "reference", "tolerance"]);
    for (i, c) in checks.iter().enumerate() {
        table.rows.push(vec![i as f64, c.value, c.reference, c.tolerance]);
    }
    Ok(Outcome {
        values: json!(checks
            .iter()
            .map(|c| json!({ "name": c.name, "value": c.value, "reference": c.reference, "tolerance": c.tolerance, "passed": c.passed() }))
            .collect::<Vec<_>>()),
        stderr: Value::Null,
        alive_fraction: None,
        h: None,
        n: None,
        passed: checks.iter().all(|c| c.passed()),
        table,
    })
}
