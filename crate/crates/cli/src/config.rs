//! Run configuration in sectioned `key = value` form.
//!
//! ```text
//! [manifold]
//! sigma1 = torus
//! periods1 = 2pi, 2pi
//! sigma2 = torus
//! periods2 = pi, 0.6pi
//!
//! [grid]
//! resolution = 128
//!
//! [flow]
//! t_max = 20
//!
//! [initial]
//! map = perturbed-affine
//! matrix = diag(0.5, 0.3)
//! epsilon = 0.2
//!
//! [output]
//! dir = out
//! ```
//!
//! `#` starts a comment. Numbers accept a `pi` factor (`pi`, `2pi`, `0.6*pi`).
//! Omitted keys take the defaults shown by [`RunConfig::to_text`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use graphflow::flow::{
    FlowConfig, DEFAULT_CFL_SAFETY, DEFAULT_MONITOR_INTERVAL, DEFAULT_REFUSE_ETA,
    DEFAULT_STOP_A_NORM, DEFAULT_STOP_ETA1,
};
use graphflow::{make_grid, ManifoldSpec, ProductSpec};

use crate::initial::InitialMap;

pub const DEFAULT_T_MAX: f64 = 20.0;

const SECTIONS: [(&str, &[&str]); 5] = [
    ("manifold", &["sigma1", "n", "k1", "periods1", "sigma2", "k2", "periods2"]),
    ("grid", &["resolution"]),
    (
        "flow",
        &[
            "cfl_safety",
            "t_max",
            "stop_A_norm",
            "stop_eta1",
            "refuse_eta",
            "max_steps",
            "monitor_interval",
            "verify",
        ],
    ),
    ("initial", &["map", "point", "matrix", "offset", "epsilon"]),
    ("output", &["dir", "snapshot_interval"]),
];

#[derive(Clone, Debug, PartialEq)]
pub struct FlowParams {
    pub cfl_safety: f64,
    pub t_max: f64,
    pub stop_a_norm: f64,
    pub stop_eta1: f64,
    pub refuse_eta: f64,
    pub max_steps: Option<u64>,
    pub monitor_interval: u64,
    pub verify: bool,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            cfl_safety: DEFAULT_CFL_SAFETY,
            t_max: DEFAULT_T_MAX,
            stop_a_norm: DEFAULT_STOP_A_NORM,
            stop_eta1: DEFAULT_STOP_ETA1,
            refuse_eta: DEFAULT_REFUSE_ETA,
            max_steps: None,
            monitor_interval: DEFAULT_MONITOR_INTERVAL,
            verify: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub product: ProductSpec,
    pub resolution: Vec<usize>,
    pub flow: FlowParams,
    pub initial: InitialMap,
    pub out_dir: PathBuf,
    /// Steps between snapshots; a multiple of the monitor interval, 0 for none.
    pub snapshot_interval: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in one config text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    line: usize,
    value: String,
}

struct Reader {
    table: BTreeMap<(&'static str, &'static str), Entry>,
    errors: Vec<ConfigError>,
}

impl Reader {
    fn err(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            message: message.into(),
        });
    }

    fn line(&self, sec: &'static str, key: &'static str) -> Option<usize> {
        self.table.get(&(sec, key)).map(|e| e.line)
    }

    fn has(&self, sec: &'static str, key: &'static str) -> bool {
        self.table.contains_key(&(sec, key))
    }

    fn get<T>(
        &mut self,
        sec: &'static str,
        key: &'static str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Option<T> {
        let e = self.table.get(&(sec, key))?;
        let line = e.line;
        match parse(e.value.trim()) {
            Ok(v) => Some(v),
            Err(m) => {
                self.err(Some(line), format!("[{sec}] {key}: {m}"));
                None
            }
        }
    }

    fn require<T>(
        &mut self,
        sec: &'static str,
        key: &'static str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> Option<T> {
        if !self.has(sec, key) {
            self.err(None, format!("[{sec}] {key} is required"));
            return None;
        }
        self.get(sec, key, parse)
    }
}

fn lex(text: &str) -> Reader {
    let mut r = Reader {
        table: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section: Option<(&'static str, &'static [&'static str])> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|b| b.strip_suffix(']')) {
            let name = name.trim();
            section = SECTIONS.iter().find(|(s, _)| *s == name).copied();
            if section.is_none() {
                r.err(Some(line), format!("unknown section [{name}]"));
            }
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            r.err(Some(line), format!("expected `key = value`, got `{body}`"));
            continue;
        };
        let key = key.trim();
        let Some((sec, keys)) = section else {
            if r.errors.last().map(|e| e.line) != Some(Some(line)) {
                r.err(Some(line), format!("key `{key}` outside a known section"));
            }
            continue;
        };
        let Some(&k) = keys.iter().find(|k| **k == key) else {
            r.err(Some(line), format!("unknown key `{key}` in [{sec}]"));
            continue;
        };
        if let Some(prev) = r.table.get(&(sec, k)) {
            let first = prev.line;
            r.err(Some(line), format!("duplicate key `{k}` in [{sec}] (lines {first} and {line})"));
            continue;
        }
        r.table.insert(
            (sec, k),
            Entry {
                line,
                value: value.trim().to_string(),
            },
        );
    }
    r
}

/// Parses a decimal number with an optional `pi` factor.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let bad = || format!("`{t}` is not a number");
    let v = if let Some(head) = t.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        match head {
            "" => PI,
            "-" => -PI,
            h => h.parse::<f64>().map_err(|_| bad())? * PI,
        }
    } else {
        t.parse::<f64>().map_err(|_| bad())?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{t}` is not finite"))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(parse_number).collect()
}

/// `a, b, ...` or `diag(a, b)` for a `2 × n` matrix.
fn parse_matrix(s: &str, n: usize) -> Result<Vec<f64>, String> {
    if let Some(inner) = s.strip_prefix("diag(").and_then(|r| r.strip_suffix(')')) {
        let d = parse_list(inner)?;
        if d.len() != 2 {
            return Err(format!("diag needs 2 entries, got {}", d.len()));
        }
        let mut m = vec![0.0; 2 * n];
        m[0] = d[0];
        if n > 1 {
            m[n + 1] = d[1];
        }
        return Ok(m);
    }
    parse_list(s)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_number(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn parse_count(s: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected `true` or `false`, got `{s}`")),
    }
}

/// `N` or `N,M,...`; a single `N` means `N` per direction, or `N × 2N` on a sphere.
pub fn parse_resolution(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{}` is not a node count", t.trim()))
        })
        .collect()
}

pub fn expand_resolution(res: &[usize], spec: &ManifoldSpec) -> Vec<usize> {
    if res.len() == 1 {
        if spec.is_sphere() && spec.dim() == 2 {
            vec![res[0], 2 * res[0]]
        } else {
            vec![res[0]; spec.dim()]
        }
    } else {
        res.to_vec()
    }
}

fn factor(r: &mut Reader, which: usize, dim: usize) -> Option<ManifoldSpec> {
    let (kind_key, k_key, p_key) = if which == 1 {
        ("sigma1", "k1", "periods1")
    } else {
        ("sigma2", "k2", "periods2")
    };
    let kind = r.require("manifold", kind_key, |s| match s {
        "torus" | "sphere" => Ok(s.to_string()),
        _ => Err(format!("expected `torus` or `sphere`, got `{s}`")),
    })?;
    if kind == "sphere" {
        if r.has("manifold", p_key) {
            let l = r.line("manifold", p_key);
            r.err(l, format!("[manifold] {p_key} applies to torus factors only"));
        }
        let k = r.get("manifold", k_key, parse_number).unwrap_or(1.0);
        if k < 0.0 {
            let l = r.line("manifold", k_key);
            r.err(
                l,
                format!("[manifold] {k_key} = {k}: hyperbolic factors (negative curvature) are not supported"),
            );
            return None;
        }
        match ManifoldSpec::sphere(dim, k) {
            Ok(s) => Some(s),
            Err(e) => {
                let l = r.line("manifold", k_key).or(r.line("manifold", kind_key));
                r.err(l, format!("[manifold] {kind_key}: {e}"));
                None
            }
        }
    } else {
        if r.has("manifold", k_key) {
            let l = r.line("manifold", k_key);
            r.err(l, format!("[manifold] {k_key} applies to sphere factors only (tori are flat)"));
        }
        let periods = r.get("manifold", p_key, parse_list).unwrap_or_else(|| vec![2.0 * PI; dim]);
        if periods.len() != dim {
            let l = r.line("manifold", p_key);
            r.err(l, format!("[manifold] {p_key} needs {dim} entries, got {}", periods.len()));
            return None;
        }
        match ManifoldSpec::torus(&periods) {
            Ok(s) => Some(s),
            Err(e) => {
                let l = r.line("manifold", p_key);
                r.err(l, format!("[manifold] {p_key}: {e}"));
                None
            }
        }
    }
}

fn initial_map(r: &mut Reader, product: Option<&ProductSpec>, n: usize) -> Option<InitialMap> {
    let name = r.require("initial", "map", |s| {
        InitialMap::NAMES
            .iter()
            .find(|m| **m == s)
            .copied()
            .ok_or_else(|| format!("unknown map `{s}`, expected one of {}", InitialMap::NAMES.join(", ")))
    })?;
    let allowed: &[&str] = match name {
        "constant" => &["point"],
        "affine" => &["matrix", "offset"],
        "perturbed-affine" => &["matrix", "offset", "epsilon"],
        "sphere-harmonic" => &["epsilon"],
        _ => &[],
    };
    for key in ["point", "matrix", "offset", "epsilon"] {
        if r.has("initial", key) && !allowed.contains(&key) {
            let l = r.line("initial", key);
            r.err(l, format!("[initial] {key} does not apply to map `{name}`"));
        }
    }
    let sphere_target = product.map(|p| p.sigma2.is_sphere()).unwrap_or(false);
    let map = match name {
        "constant" => {
            let default = if sphere_target { vec![0.0, 0.0, 1.0] } else { vec![0.0, 0.0] };
            let point = r.get("initial", "point", parse_list).unwrap_or(default);
            InitialMap::Constant { point }
        }
        "affine" | "perturbed-affine" => {
            let matrix = r.require("initial", "matrix", |s| parse_matrix(s, n));
            let offset = r.get("initial", "offset", parse_list).unwrap_or(vec![0.0, 0.0]);
            if name == "affine" {
                InitialMap::Affine {
                    matrix: matrix?,
                    offset,
                }
            } else {
                let epsilon = r.require("initial", "epsilon", parse_number);
                InitialMap::PerturbedAffine {
                    matrix: matrix?,
                    offset,
                    epsilon: epsilon?,
                }
            }
        }
        "sphere-harmonic" => InitialMap::SphereHarmonic {
            epsilon: r.require("initial", "epsilon", parse_number)?,
        },
        _ => InitialMap::Identity,
    };
    if let Some(p) = product {
        let l = r.line("initial", "map");
        for e in map.validate(p) {
            r.err(l, format!("[initial] {e}"));
        }
    }
    Some(map)
}

/// Parses and validates `text`, collecting every error.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut r = lex(text);

    let n = r
        .get("manifold", "n", |s| s.parse::<usize>().map_err(|_| format!("`{s}` is not a dimension")))
        .unwrap_or(2);
    let s1 = factor(&mut r, 1, n);
    let s2 = factor(&mut r, 2, 2);
    let product = match (s1, s2) {
        (Some(a), Some(b)) => match ProductSpec::new(a, b) {
            Ok(p) => Some(p),
            Err(e) => {
                let l = r.line("manifold", "k2").or(r.line("manifold", "sigma2"));
                r.err(l, format!("[manifold] {e}"));
                None
            }
        },
        _ => None,
    };

    let resolution = r.require("grid", "resolution", parse_resolution);
    let resolution = match (resolution, &product) {
        (Some(res), Some(p)) => {
            let res = expand_resolution(&res, &p.sigma1);
            if let Err(e) = make_grid(&p.sigma1, &res) {
                let l = r.line("grid", "resolution");
                r.err(l, format!("[grid] resolution: {e}"));
            }
            res
        }
        (Some(res), None) => res,
        _ => Vec::new(),
    };

    let mut flow = FlowParams::default();
    if let Some(v) = r.get("flow", "cfl_safety", parse_number) {
        if v > 0.0 && v <= 1.0 {
            flow.cfl_safety = v;
        } else {
            let l = r.line("flow", "cfl_safety");
            r.err(l, format!("[flow] cfl_safety must lie in (0, 1], got {v}"));
        }
    }
    if let Some(v) = r.get("flow", "t_max", parse_positive) {
        flow.t_max = v;
    }
    if let Some(v) = r.get("flow", "stop_A_norm", parse_positive) {
        flow.stop_a_norm = v;
    }
    if let Some(v) = r.get("flow", "stop_eta1", parse_positive) {
        flow.stop_eta1 = v;
    }
    if let Some(v) = r.get("flow", "refuse_eta", parse_positive) {
        flow.refuse_eta = v;
    }
    if r.has("flow", "max_steps") {
        flow.max_steps = r.get("flow", "max_steps", parse_count);
    }
    if let Some(v) = r.get("flow", "monitor_interval", parse_count) {
        if v == 0 {
            let l = r.line("flow", "monitor_interval");
            r.err(l, "[flow] monitor_interval must be at least 1");
        } else {
            flow.monitor_interval = v;
        }
    }
    if let Some(v) = r.get("flow", "verify", parse_bool) {
        flow.verify = v;
    }

    let initial = initial_map(&mut r, product.as_ref(), n);

    let out_dir = r
        .get("output", "dir", |s| {
            if s.is_empty() {
                Err("must not be empty".to_string())
            } else {
                Ok(PathBuf::from(s))
            }
        })
        .unwrap_or_else(|| PathBuf::from("out"));
    let snapshot_interval = r.get("output", "snapshot_interval", parse_count).unwrap_or(0);
    if snapshot_interval % flow.monitor_interval != 0 {
        let l = r.line("output", "snapshot_interval");
        r.err(
            l,
            format!(
                "[output] snapshot_interval {snapshot_interval} is not a multiple of monitor_interval {}",
                flow.monitor_interval
            ),
        );
    }

    if !r.errors.is_empty() {
        r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        return Err(ConfigErrors(r.errors));
    }
    Ok(RunConfig {
        product: product.expect("no errors implies a product"),
        resolution,
        flow,
        initial: initial.expect("no errors implies a map"),
        out_dir,
        snapshot_interval,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn write_factor(s: &mut String, spec: &ManifoldSpec, which: usize) {
    match spec {
        ManifoldSpec::FlatTorus { periods } => {
            s.push_str(&format!("sigma{which} = torus\nperiods{which} = {}\n", join(periods)));
        }
        ManifoldSpec::RoundSphere { curvature, .. } => {
            s.push_str(&format!("sigma{which} = sphere\nk{which} = {curvature}\n"));
        }
    }
}

impl RunConfig {
    /// Canonical text with every key spelled out; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("[manifold]\n");
        write_factor(&mut s, &self.product.sigma1, 1);
        s.push_str(&format!("n = {}\n", self.product.n()));
        write_factor(&mut s, &self.product.sigma2, 2);
        let res: Vec<String> = self.resolution.iter().map(|r| r.to_string()).collect();
        s.push_str(&format!("\n[grid]\nresolution = {}\n", res.join(", ")));
        let f = &self.flow;
        s.push_str(&format!(
            "\n[flow]\ncfl_safety = {}\nt_max = {}\nstop_A_norm = {}\nstop_eta1 = {}\nrefuse_eta = {}\n",
            f.cfl_safety, f.t_max, f.stop_a_norm, f.stop_eta1, f.refuse_eta
        ));
        if let Some(m) = f.max_steps {
            s.push_str(&format!("max_steps = {m}\n"));
        }
        s.push_str(&format!("monitor_interval = {}\nverify = {}\n", f.monitor_interval, f.verify));
        s.push_str(&format!("\n[initial]\nmap = {}\n", self.initial.name()));
        match &self.initial {
            InitialMap::Constant { point } => s.push_str(&format!("point = {}\n", join(point))),
            InitialMap::Affine { matrix, offset } => {
                s.push_str(&format!("matrix = {}\noffset = {}\n", join(matrix), join(offset)));
            }
            InitialMap::PerturbedAffine {
                matrix,
                offset,
                epsilon,
            } => s.push_str(&format!(
                "matrix = {}\noffset = {}\nepsilon = {epsilon}\n",
                join(matrix),
                join(offset)
            )),
            InitialMap::SphereHarmonic { epsilon } => s.push_str(&format!("epsilon = {epsilon}\n")),
            InitialMap::Identity => {}
        }
        s.push_str(&format!(
            "\n[output]\ndir = {}\nsnapshot_interval = {}\n",
            self.out_dir.display(),
            self.snapshot_interval
        ));
        s
    }

    pub fn flow_config(&self) -> FlowConfig {
        let mut c = FlowConfig::new(self.product.clone(), self.flow.t_max);
        c.cfl_safety = self.flow.cfl_safety;
        c.stop_a_norm = self.flow.stop_a_norm;
        c.stop_eta1 = self.flow.stop_eta1;
        c.refuse_eta = self.flow.refuse_eta;
        c.max_steps = self.flow.max_steps;
        c.monitor_interval = self.flow.monitor_interval;
        c.verify = self.flow.verify;
        c
    }
}
