//! Line-oriented run configuration: `[section]` headers, `key = value`
//! pairs, `#` comments, comma-separated lists.
//!
//! Parsing never stops at the first problem. Every malformed line, unknown
//! key and invalid value is collected and reported together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use svi_core::noise::{CoeffTerm, SpaceProfile, TimeProfile};
use svi_core::{BoundaryKind, CoeffSpec, Forcing, InitialData, InitialKind, ReactionSpec};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Run,
    Ensemble,
    RateEps,
    RateMesh,
    Stefan,
    Signorini,
    Verify,
}

impl Mode {
    const CATALOG: &'static str = "run, ensemble, rate-eps, rate-mesh, stefan, signorini, verify";

    fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "run" => Mode::Run,
            "ensemble" => Mode::Ensemble,
            "rate-eps" => Mode::RateEps,
            "rate-mesh" => Mode::RateMesh,
            "stefan" => Mode::Stefan,
            "signorini" => Mode::Signorini,
            "verify" => Mode::Verify,
            _ => return None,
        })
    }
}

/// Initial temperature of a Stefan run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theta0 {
    Zero,
    /// `amp · max(0, 1 - |ξ - center|² / radius²)`
    Bump { amp: f64, center: [f64; 2], radius: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StefanConfig {
    pub theta0: Theta0,
    pub rho: f64,
    pub boundary_temperature: Option<f64>,
    pub tol_fb: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub n: usize,
    pub bc: BoundaryKind,

    pub t_final: f64,
    pub dt: f64,
    pub theta: f64,

    pub seed: u64,
    pub coeffs: CoeffSpec,

    pub reaction: ReactionSpec,

    /// One value for single runs, a decreasing list for `rate-eps`.
    pub eps: Vec<f64>,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub max_retries: u32,

    pub forcing: Forcing,
    pub initial: InitialData,
    pub stefan: StefanConfig,

    pub mode: Mode,
    pub n_paths: usize,
    pub slack: f64,
    pub workers: usize,
    pub levels: usize,
    pub probe_samples: usize,
    pub checks: Vec<String>,

    pub out_dir: PathBuf,
    /// Write every `stride`-th time level to trajectory.csv.
    pub stride: usize,
}

pub const VERIFY_CHECKS: [&str; 8] = ["heat", "complementarity", "cauchy_rate", "energy", "transform", "signorini", "stefan", "noise"];

type Section = BTreeMap<String, (String, usize)>;

fn split_sections(text: &str, errors: &mut Vec<String>) -> BTreeMap<String, Section> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) if !name.trim().is_empty() => {
                    let name = name.trim().to_string();
                    sections.entry(name.clone()).or_default();
                    current = Some(name);
                }
                _ => errors.push(format!("line {lineno}: malformed section header '{line}'")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {lineno}: expected 'key = value', got '{line}'"));
            continue;
        };
        let key = key.trim();
        let Some(sec) = current.as_ref() else {
            errors.push(format!("line {lineno}: key '{key}' appears before any [section]"));
            continue;
        };
        if key.is_empty() {
            errors.push(format!("line {lineno}: empty key in [{sec}]"));
            continue;
        }
        let entry = sections.get_mut(sec).expect("section exists");
        if entry.contains_key(key) {
            errors.push(format!("line {lineno}: {sec}.{key} is set twice"));
        }
        entry.insert(key.to_string(), (value.trim().to_string(), lineno));
    }
    sections
}

/// Typed access to the raw sections, remembering which keys were read so
/// that leftovers can be reported as unknown.
struct Reader {
    sections: BTreeMap<String, Section>,
    used: BTreeMap<String, Vec<String>>,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&mut self, sec: &str, key: &str) -> Option<String> {
        self.used.entry(sec.to_string()).or_default().push(key.to_string());
        self.sections.get(sec).and_then(|s| s.get(key)).map(|(v, _)| v.clone())
    }

    fn err(&mut self, sec: &str, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{sec}.{key} {msg}"));
    }

    fn f64_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        match self.raw(sec, key) {
            None => default,
            Some(v) => v.parse::<f64>().unwrap_or_else(|_| {
                self.err(sec, key, format!("'{v}' is not a number"));
                default
            }),
        }
    }

    fn f64_req(&mut self, sec: &str, key: &str) -> f64 {
        if self.raw(sec, key).is_none() {
            self.err(sec, key, "is required");
            return f64::NAN;
        }
        self.f64_or(sec, key, f64::NAN)
    }

    fn uint_or<T: std::str::FromStr + Copy>(&mut self, sec: &str, key: &str, default: T) -> T {
        match self.raw(sec, key) {
            None => default,
            Some(v) => v.parse::<T>().unwrap_or_else(|_| {
                self.err(sec, key, format!("'{v}' is not a nonnegative integer"));
                default
            }),
        }
    }

    fn str_or(&mut self, sec: &str, key: &str, default: &str) -> String {
        self.raw(sec, key).unwrap_or_else(|| default.to_string())
    }

    fn list_or(&mut self, sec: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.raw(sec, key) {
            None => default.to_vec(),
            Some(v) => {
                let mut out = Vec::new();
                for item in v.split(',') {
                    match item.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(_) => {
                            self.err(sec, key, format!("'{}' is not a number", item.trim()));
                            return default.to_vec();
                        }
                    }
                }
                out
            }
        }
    }

    fn pair_or(&mut self, sec: &str, key: &str, default: [f64; 2]) -> [f64; 2] {
        let v = self.list_or(sec, key, &default);
        match v.len() {
            1 => [v[0], 0.0],
            2 => [v[0], v[1]],
            _ => {
                self.err(sec, key, "expects one or two values");
                default
            }
        }
    }

    fn modes_or(&mut self, sec: &str, key: &str, default: [u32; 2]) -> [u32; 2] {
        let v = self.pair_or(sec, key, [default[0] as f64, default[1] as f64]);
        if v.iter().any(|m| *m < 0.0 || m.fract() != 0.0 || *m > 1e6) {
            self.err(sec, key, "wave numbers must be nonnegative integers");
            return default;
        }
        [v[0] as u32, v[1] as u32]
    }

    fn unknown_keys(&mut self) {
        for (sec, entries) in &self.sections {
            let used = self.used.get(sec);
            for (key, (_, line)) in entries {
                if !used.is_some_and(|u| u.contains(key)) {
                    self.errors.push(format!("line {line}: unknown key {sec}.{key}"));
                }
            }
        }
    }
}

const SECTIONS: [&str; 10] = ["domain", "time", "noise", "reaction", "penalty", "forcing", "initial", "stefan", "run", "output"];

fn coefficient(r: &mut Reader, k: usize) -> Option<CoeffTerm> {
    let sec = "noise";
    let key = |s: &str| format!("mu{k}.{s}");
    let space_id = match r.raw(sec, &key("space")) {
        Some(s) => s,
        None => {
            r.err(sec, &key("space"), "is required for every noise index up to m");
            return None;
        }
    };
    let amp = r.f64_or(sec, &key("amp"), 1.0);
    let modes = r.modes_or(sec, &key("modes"), [1, 0]);
    let space = match space_id.as_str() {
        "constant" => SpaceProfile::Constant(amp),
        "quadratic" => SpaceProfile::Quadratic {
            c0: r.f64_or(sec, &key("c0"), 0.0),
            c1: r.pair_or(sec, &key("c1"), [0.0; 2]),
            c2: r.pair_or(sec, &key("c2"), [0.0; 2]),
        },
        "sine" => SpaceProfile::SineMode { amp, modes },
        "cosine" => SpaceProfile::CosineMode { amp, modes },
        other => {
            r.err(sec, &key("space"), format!("unknown profile '{other}' (catalog: constant, quadratic, sine, cosine)"));
            return None;
        }
    };
    let time = match r.str_or(sec, &key("time"), "constant").as_str() {
        "constant" => TimeProfile::Constant(r.f64_or(sec, &key("time_value"), 1.0)),
        "linear" => TimeProfile::Linear { offset: r.f64_or(sec, &key("time_offset"), 1.0), slope: r.f64_or(sec, &key("time_slope"), 0.0) },
        "cosine" => TimeProfile::Cosine {
            amp: r.f64_or(sec, &key("time_amp"), 1.0),
            omega: r.f64_or(sec, &key("omega"), 1.0),
            phase: r.f64_or(sec, &key("phase"), 0.0),
        },
        other => {
            r.err(sec, &key("time"), format!("unknown profile '{other}' (catalog: constant, linear, cosine)"));
            return None;
        }
    };
    Some(CoeffTerm::new(time, space))
}

fn forcing(r: &mut Reader) -> Forcing {
    let sec = "forcing";
    let id = r.str_or(sec, "id", "zero");
    let amp = r.f64_or(sec, "amp", 1.0);
    let modes = r.modes_or(sec, "modes", [1, 0]);
    match id.as_str() {
        "zero" => Forcing::Zero,
        "constant" => Forcing::Constant(r.f64_or(sec, "value", 0.0)),
        "sine" => Forcing::SineMode { amp, modes },
        "oscillating" => Forcing::Oscillating { amp, omega: r.f64_or(sec, "omega", 1.0), modes },
        "boundary_suction" => {
            let width = r.f64_or(sec, "width", 0.1);
            if !(width > 0.0) {
                r.err(sec, "width", "must be > 0");
            }
            Forcing::BoundarySuction { amp, width }
        }
        other => {
            r.err(sec, "id", format!("unknown forcing '{other}' (catalog: zero, constant, sine, oscillating, boundary_suction)"));
            Forcing::Zero
        }
    }
}

fn initial(r: &mut Reader) -> InitialData {
    let sec = "initial";
    let id = r.str_or(sec, "id", "zero");
    let amplitude = r.f64_or(sec, "amplitude", 1.0);
    if !(amplitude >= 0.0) {
        r.err(sec, "amplitude", "must be >= 0");
    }
    let kind = match id.as_str() {
        "zero" => InitialKind::Zero,
        "sine" => InitialKind::SineBump,
        "cone" => {
            let radius = r.f64_or(sec, "radius", 0.25);
            if !(radius > 0.0) {
                r.err(sec, "radius", "must be > 0");
            }
            InitialKind::TruncatedCone { center: r.pair_or(sec, "center", [0.5, 0.5]), radius }
        }
        "cutoff" => {
            let width = r.f64_or(sec, "width", 0.1);
            if !(width > 0.0) {
                r.err(sec, "width", "must be > 0");
            }
            InitialKind::ConstantCutoff { width }
        }
        other => {
            r.err(sec, "id", format!("unknown initial data '{other}' (catalog: zero, sine, cone, cutoff)"));
            InitialKind::Zero
        }
    };
    InitialData { kind, amplitude }
}

fn stefan(r: &mut Reader, lengths: &[f64]) -> StefanConfig {
    let sec = "stefan";
    let theta0 = match r.str_or(sec, "theta0", "zero").as_str() {
        "zero" => Theta0::Zero,
        "bump" => {
            let amp = r.f64_or(sec, "theta0_amp", 1.0);
            let center = r.pair_or(sec, "theta0_center", [0.5, 0.5]);
            let radius = r.f64_or(sec, "theta0_radius", 0.1);
            if !(amp >= 0.0) {
                r.err(sec, "theta0_amp", "must be >= 0");
            }
            if !(radius > 0.0) {
                r.err(sec, "theta0_radius", "must be > 0");
            }
            // the initial temperature must vanish near the boundary
            for (a, l) in lengths.iter().enumerate() {
                if center[a] - radius <= 0.0 || center[a] + radius >= *l {
                    r.err(sec, "theta0_radius", "the bump must be compactly supported inside the domain");
                    break;
                }
            }
            Theta0::Bump { amp, center, radius }
        }
        other => {
            r.err(sec, "theta0", format!("unknown initial temperature '{other}' (catalog: zero, bump)"));
            Theta0::Zero
        }
    };
    let rho = r.f64_or(sec, "rho", 1.0);
    if !(rho > 0.0) {
        r.err(sec, "rho", "must be > 0");
    }
    let boundary_temperature = r.raw(sec, "boundary_temperature").map(|_| r.f64_or(sec, "boundary_temperature", 0.0));
    if boundary_temperature.is_some_and(|t| !(t >= 0.0)) {
        r.err(sec, "boundary_temperature", "must be >= 0");
    }
    let tol_fb = r.raw(sec, "tol_fb").map(|_| r.f64_or(sec, "tol_fb", 0.0));
    if tol_fb.is_some_and(|t| !(t > 0.0)) {
        r.err(sec, "tol_fb", "must be > 0");
    }
    StefanConfig { theta0, rho, boundary_temperature, tol_fb }
}

pub fn parse_str(text: &str) -> Result<RunConfig, CliError> {
    let mut errors = Vec::new();
    let sections = split_sections(text, &mut errors);
    for name in sections.keys() {
        if !SECTIONS.contains(&name.as_str()) {
            errors.push(format!("unknown section [{name}] (expected one of: {})", SECTIONS.join(", ")));
        }
    }
    let mut r = Reader { sections, used: BTreeMap::new(), errors };

    // [domain]
    let dim = r.uint_or("domain", "dim", 1usize);
    if !(1..=2).contains(&dim) {
        r.err("domain", "dim", "must be 1 or 2");
    }
    let lengths = r.list_or("domain", "lengths", &vec![1.0; dim.clamp(1, 2)]);
    if lengths.len() != dim.clamp(1, 2) {
        r.err("domain", "lengths", format!("expects {dim} values"));
    }
    if lengths.iter().any(|l| !(*l > 0.0)) {
        r.err("domain", "lengths", "must be > 0");
    }
    let n = r.uint_or("domain", "n", 63usize);
    if n < 3 {
        r.err("domain", "n", "must be >= 3");
    }
    let bc = match r.str_or("domain", "bc", "dirichlet").as_str() {
        "dirichlet" => BoundaryKind::Dirichlet,
        "neumann" => BoundaryKind::Neumann,
        other => {
            r.err("domain", "bc", format!("unknown boundary kind '{other}' (catalog: dirichlet, neumann)"));
            BoundaryKind::Dirichlet
        }
    };

    // [time]
    let t_final = r.f64_req("time", "T");
    let dt = r.f64_req("time", "dt");
    let theta = r.f64_or("time", "theta", 1.0);
    if !(t_final > 0.0) && !t_final.is_nan() {
        r.err("time", "T", "must be > 0");
    }
    if !(dt > 0.0) && !dt.is_nan() {
        r.err("time", "dt", "must be > 0");
    }
    if dt > 0.0 && t_final > 0.0 && dt > t_final {
        r.err("time", "dt", "must not exceed T");
    }
    if !(0.5..=1.0).contains(&theta) {
        r.err("time", "theta", "must lie in [0.5, 1]");
    }

    // [noise]
    let m = r.uint_or("noise", "m", 0usize);
    let seed = r.uint_or("noise", "seed", 0u64);
    let mut terms = Vec::new();
    for k in 1..=m {
        if let Some(t) = coefficient(&mut r, k) {
            terms.push(t);
        }
    }

    // [reaction]
    let alpha = r.f64_or("reaction", "alpha", 0.0);
    let reaction = match r.str_or("reaction", "kind", "zero").as_str() {
        "zero" => ReactionSpec::zero(),
        "linear" => ReactionSpec::linear(alpha),
        "saturating" => ReactionSpec::saturating(alpha),
        other => {
            r.err("reaction", "kind", format!("unknown reaction '{other}' (catalog: zero, linear, saturating)"));
            ReactionSpec::zero()
        }
    };

    // [penalty]
    let eps = r.list_or("penalty", "eps", &[1e-3]);
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
        r.err("penalty", "eps", "must be > 0");
    }
    let newton_tol = r.f64_or("penalty", "newton_tol", 1e-10);
    if !(newton_tol > 0.0) {
        r.err("penalty", "newton_tol", "must be > 0");
    }
    let newton_max = r.uint_or("penalty", "newton_max", 500usize);
    let max_retries = r.uint_or("penalty", "max_retries", 3u32);

    let forcing = forcing(&mut r);
    let initial = initial(&mut r);
    let stefan = stefan(&mut r, &lengths);

    // [run]
    let mode_s = r.str_or("run", "mode", "run");
    let mode = Mode::parse(&mode_s).unwrap_or_else(|| {
        r.err("run", "mode", format!("unknown mode '{mode_s}' (catalog: {})", Mode::CATALOG));
        Mode::Run
    });
    let n_paths = r.uint_or("run", "n_paths", 1usize);
    if n_paths == 0 {
        r.err("run", "n_paths", "must be >= 1");
    }
    let slack = r.f64_or("run", "slack", 10.0);
    if !(slack > 0.0) {
        r.err("run", "slack", "must be > 0");
    }
    let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let workers = r.uint_or("run", "workers", default_workers).max(1);
    let levels = r.uint_or("run", "levels", 3usize);
    let probe_samples = r.uint_or("run", "probe_samples", 200usize);
    if probe_samples < 100 {
        r.err("run", "probe_samples", "must be >= 100");
    }
    let checks: Vec<String> = match r.raw("run", "checks") {
        None => VERIFY_CHECKS.iter().map(|s| s.to_string()).collect(),
        Some(v) => v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
    };
    for c in &checks {
        if !VERIFY_CHECKS.contains(&c.as_str()) {
            r.err("run", "checks", format!("unknown check '{c}' (catalog: {})", VERIFY_CHECKS.join(", ")));
        }
    }

    // [output]
    let out_dir = PathBuf::from(r.str_or("output", "dir", "out"));
    let stride = r.uint_or("output", "stride", 1usize).max(1);

    // cross-section consistency
    if mode == Mode::Signorini && bc != BoundaryKind::Neumann {
        r.err("domain", "bc", "mode = signorini needs bc = neumann");
    }
    if matches!(mode, Mode::Run | Mode::Ensemble | Mode::RateEps | Mode::RateMesh | Mode::Stefan) && bc != BoundaryKind::Dirichlet {
        r.err("domain", "bc", format!("mode = {mode_s} needs bc = dirichlet"));
    }
    if mode == Mode::RateEps && eps.len() < 4 {
        r.err("penalty", "eps", "mode = rate-eps needs a list of at least 4 values");
    }
    if mode == Mode::RateMesh && dim != 1 {
        r.err("domain", "dim", "mode = rate-mesh runs in 1D");
    }
    if mode == Mode::Ensemble && n_paths < 2 {
        r.err("run", "n_paths", "mode = ensemble needs at least 2 paths");
    }
    if stefan.boundary_temperature.is_some() && dim != 1 {
        r.err("stefan", "boundary_temperature", "is only supported in 1D");
    }

    r.unknown_keys();
    if !r.errors.is_empty() {
        return Err(CliError::Config(r.errors));
    }
    Ok(RunConfig {
        dim,
        lengths,
        n,
        bc,
        t_final,
        dt,
        theta,
        seed,
        coeffs: CoeffSpec::new(terms),
        reaction,
        eps,
        newton_tol,
        newton_max,
        max_retries,
        forcing,
        initial,
        stefan,
        mode,
        n_paths,
        slack,
        workers,
        levels,
        probe_samples,
        checks,
        out_dir,
        stride,
    })
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text)
}
