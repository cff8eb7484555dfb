//! Run configuration: a flat, diff-friendly `[section]` / `key = value` text
//! format with an exact round-trip guarantee (`parse(render(c)) == c`).
//!
//! Floats are rendered with Rust's shortest round-trip formatting, so every
//! representable configuration survives a render/parse cycle bit-for-bit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use entrodiff::{AverageRule, SchemeVariant};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("section [{section}]: {message}")]
    Section { section: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    fn invalid(message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid(message.into())
    }
}

/// Equation family: two named presets plus raw flux coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EquationSpec {
    /// a = -2, b = 1, beta = 0.
    Dlss,
    /// a = b = 0 with the given beta.
    ThinFilm { beta: f64 },
    Raw { a: f64, b: f64, beta: f64 },
}

impl EquationSpec {
    /// Flux coefficients (a, b, beta) of the family member.
    pub fn coefficients(&self) -> (f64, f64, f64) {
        match *self {
            EquationSpec::Dlss => (-2.0, 1.0, 0.0),
            EquationSpec::ThinFilm { beta } => (0.0, 0.0, beta),
            EquationSpec::Raw { a, b, beta } => (a, b, beta),
        }
    }

    /// The same member with beta replaced, preserving a and b.
    pub fn with_beta(self, beta: f64) -> EquationSpec {
        match self {
            EquationSpec::Dlss => EquationSpec::Raw { a: -2.0, b: 1.0, beta },
            EquationSpec::ThinFilm { .. } => EquationSpec::ThinFilm { beta },
            EquationSpec::Raw { a, b, .. } => EquationSpec::Raw { a, b, beta },
        }
    }

    /// The same member with `a` replaced.
    pub fn with_a(self, a: f64) -> EquationSpec {
        let (_, b, beta) = self.coefficients();
        EquationSpec::Raw { a, b, beta }
    }

    /// The same member with `b` replaced.
    pub fn with_b(self, b: f64) -> EquationSpec {
        let (a, _, beta) = self.coefficients();
        EquationSpec::Raw { a, b, beta }
    }
}

/// Initial datum on the torus; analytic formulas are sampled at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    /// max(1e-10, cos(pi x)^16).
    Cos16,
    /// 2 - 1e-6 on [0, 0.5), 1e-6 on [0.5, 1).
    Step,
    /// 1 + 0.5 sin(2 pi x).
    Sine,
    /// 1 + (1 - 1e-16) sin(2 pi x): strictly positive but grazing zero.
    SineFull,
    Constant { value: f64 },
    RandomPositive { seed: u64 },
    /// Grayscale image rescaled to [floor, 1].
    Image { path: String, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    ImplicitEuler,
    Bdf2,
    Rk45,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianSpec {
    /// Banded in 1D, sparse iterative in 2D.
    Auto,
    Dense,
    Banded,
    Sparse,
    MatrixFree,
}

/// Time-integration controls; mirrors the solver's tunables.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSpec {
    pub method: MethodSpec,
    pub atol: f64,
    pub rtol: f64,
    /// Nonpositive requests an automatic initial step.
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_steps: usize,
    pub jacobian: JacobianSpec,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            method: MethodSpec::Bdf2,
            atol: 1e-10,
            rtol: 1e-7,
            dt_init: 0.0,
            dt_min: 1e-14,
            dt_max: f64::INFINITY,
            max_steps: 500_000,
            jacobian: JacobianSpec::Auto,
        }
    }
}

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub equation: EquationSpec,
    /// Entropy exponent alpha >= 0.
    pub alpha: f64,
    pub variant: SchemeVariant,
    pub average: AverageRule,
    /// Grid extents; one entry per axis (1 or 2 axes).
    pub dims: Vec<usize>,
    pub h: f64,
    pub initial: InitialSpec,
    pub solver: SolverSpec,
    /// Snapshot times, strictly increasing.
    pub times: Vec<f64>,
    pub t_end: f64,
    pub out_dir: String,
}

impl RunConfig {
    /// Quantum-diffusion model with the logarithmic entropy on n nodes.
    pub fn default_dlss(n: usize) -> RunConfig {
        RunConfig {
            equation: EquationSpec::Dlss,
            alpha: 0.0,
            variant: SchemeVariant::Central,
            average: AverageRule::Identity,
            dims: vec![n],
            h: 1.0 / n as f64,
            initial: InitialSpec::Sine,
            solver: SolverSpec::default(),
            times: Vec::new(),
            t_end: 1e-3,
            out_dir: "out".to_string(),
        }
    }

    /// Film-height model u_t = -(u^beta u_xxx)_x with the log entropy.
    pub fn default_thin_film(beta: f64, n: usize) -> RunConfig {
        RunConfig {
            equation: EquationSpec::ThinFilm { beta },
            ..RunConfig::default_dlss(n)
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn variant_name(v: SchemeVariant) -> &'static str {
    match v {
        SchemeVariant::Central => "central",
        SchemeVariant::Noncentral => "noncentral",
    }
}

fn average_name(a: AverageRule) -> &'static str {
    match a {
        AverageRule::Identity => "identity",
        AverageRule::ArithmeticNbr => "arith",
        AverageRule::Geometric => "geom",
    }
}

fn method_name(m: MethodSpec) -> &'static str {
    match m {
        MethodSpec::ImplicitEuler => "implicit-euler",
        MethodSpec::Bdf2 => "bdf2",
        MethodSpec::Rk45 => "rk45",
    }
}

fn jacobian_name(j: JacobianSpec) -> &'static str {
    match j {
        JacobianSpec::Auto => "auto",
        JacobianSpec::Dense => "dense",
        JacobianSpec::Banded => "banded",
        JacobianSpec::Sparse => "sparse",
        JacobianSpec::MatrixFree => "matrix-free",
    }
}

pub fn parse_variant(s: &str) -> Result<SchemeVariant, ConfigError> {
    match s {
        "central" => Ok(SchemeVariant::Central),
        "noncentral" => Ok(SchemeVariant::Noncentral),
        _ => Err(ConfigError::invalid(format!(
            "unknown scheme variant {s:?} (expected central|noncentral)"
        ))),
    }
}

pub fn parse_average(s: &str) -> Result<AverageRule, ConfigError> {
    match s {
        "identity" => Ok(AverageRule::Identity),
        "arith" => Ok(AverageRule::ArithmeticNbr),
        "geom" => Ok(AverageRule::Geometric),
        _ => Err(ConfigError::invalid(format!(
            "unknown average rule {s:?} (expected identity|arith|geom)"
        ))),
    }
}

fn parse_method(s: &str) -> Result<MethodSpec, ConfigError> {
    match s {
        "implicit-euler" => Ok(MethodSpec::ImplicitEuler),
        "bdf2" => Ok(MethodSpec::Bdf2),
        "rk45" => Ok(MethodSpec::Rk45),
        _ => Err(ConfigError::invalid(format!(
            "unknown method {s:?} (expected implicit-euler|bdf2|rk45)"
        ))),
    }
}

fn parse_jacobian(s: &str) -> Result<JacobianSpec, ConfigError> {
    match s {
        "auto" => Ok(JacobianSpec::Auto),
        "dense" => Ok(JacobianSpec::Dense),
        "banded" => Ok(JacobianSpec::Banded),
        "sparse" => Ok(JacobianSpec::Sparse),
        "matrix-free" => Ok(JacobianSpec::MatrixFree),
        _ => Err(ConfigError::invalid(format!(
            "unknown jacobian kind {s:?} (expected auto|dense|banded|sparse|matrix-free)"
        ))),
    }
}

/// Render a configuration as the canonical text form. Every field is written
/// explicitly, so the output parses back to an identical value.
pub fn render(config: &RunConfig) -> String {
    let mut s = String::new();
    s.push_str("[equation]\n");
    match config.equation {
        EquationSpec::Dlss => s.push_str("preset = dlss\n"),
        EquationSpec::ThinFilm { beta } => {
            s.push_str("preset = thin-film\n");
            let _ = writeln!(s, "beta = {}", fmt_f64(beta));
        }
        EquationSpec::Raw { a, b, beta } => {
            let _ = writeln!(s, "a = {}", fmt_f64(a));
            let _ = writeln!(s, "b = {}", fmt_f64(b));
            let _ = writeln!(s, "beta = {}", fmt_f64(beta));
        }
    }
    s.push_str("\n[entropy]\n");
    let _ = writeln!(s, "alpha = {}", fmt_f64(config.alpha));

    s.push_str("\n[scheme]\n");
    let _ = writeln!(s, "variant = {}", variant_name(config.variant));
    let _ = writeln!(s, "average = {}", average_name(config.average));

    s.push_str("\n[grid]\n");
    let dims: Vec<String> = config.dims.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(s, "dims = {}", dims.join(" "));
    let _ = writeln!(s, "h = {}", fmt_f64(config.h));

    s.push_str("\n[initial]\n");
    match &config.initial {
        InitialSpec::Cos16 => s.push_str("preset = cos16\n"),
        InitialSpec::Step => s.push_str("preset = step\n"),
        InitialSpec::Sine => s.push_str("preset = sine\n"),
        InitialSpec::SineFull => s.push_str("preset = sine-full\n"),
        InitialSpec::Constant { value } => {
            s.push_str("preset = constant\n");
            let _ = writeln!(s, "value = {}", fmt_f64(*value));
        }
        InitialSpec::RandomPositive { seed } => {
            s.push_str("preset = random-positive\n");
            let _ = writeln!(s, "seed = {seed}");
        }
        InitialSpec::Image { path, floor } => {
            s.push_str("preset = image\n");
            let _ = writeln!(s, "path = {path}");
            let _ = writeln!(s, "floor = {}", fmt_f64(*floor));
        }
    }

    s.push_str("\n[solver]\n");
    let sv = &config.solver;
    let _ = writeln!(s, "method = {}", method_name(sv.method));
    let _ = writeln!(s, "atol = {}", fmt_f64(sv.atol));
    let _ = writeln!(s, "rtol = {}", fmt_f64(sv.rtol));
    let _ = writeln!(s, "dt_init = {}", fmt_f64(sv.dt_init));
    let _ = writeln!(s, "dt_min = {}", fmt_f64(sv.dt_min));
    let _ = writeln!(s, "dt_max = {}", fmt_f64(sv.dt_max));
    let _ = writeln!(s, "max_steps = {}", sv.max_steps);
    let _ = writeln!(s, "jacobian = {}", jacobian_name(sv.jacobian));

    s.push_str("\n[output]\n");
    let times: Vec<String> = config.times.iter().map(|&t| fmt_f64(t)).collect();
    let _ = writeln!(s, "times = {}", times.join(" "));
    let _ = writeln!(s, "t_end = {}", fmt_f64(config.t_end));
    let _ = writeln!(s, "dir = {}", config.out_dir);
    s
}

/// Key/value pairs of one section, remembering which keys were consumed.
struct Section {
    values: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key).map(|(_, v)| v)
    }

    fn require(&mut self, name: &str, key: &str) -> Result<String, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError::Section {
            section: name.to_string(),
            message: format!("missing required key {key:?}"),
        })
    }

    fn finish(self, name: &str) -> Result<(), ConfigError> {
        if let Some((key, (line, _))) = self.values.into_iter().next() {
            return Err(ConfigError::Syntax {
                line,
                message: format!("unknown key {key:?} in section [{name}]"),
            });
        }
        Ok(())
    }
}

fn parse_scalar<T: std::str::FromStr>(
    section: &str,
    key: &str,
    raw: &str,
) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Section {
        section: section.to_string(),
        message: format!("cannot parse {key} = {raw:?}"),
    })
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                message: "unterminated section header".to_string(),
            })?;
            let name = name.trim().to_string();
            sections
                .entry(name.clone())
                .or_insert_with(|| Section { values: BTreeMap::new() });
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        let section = current.as_ref().ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: "key outside any [section]".to_string(),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let entry = sections.get_mut(section).expect("section was inserted");
        if entry.values.insert(key.clone(), (line_no, value)).is_some() {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("duplicate key {key:?} in section [{section}]"),
            });
        }
    }
    Ok(sections)
}

/// Parse the text form produced by [`render`] (comments and blank lines are
/// tolerated; `[scheme]`, `[solver]`, and parts of `[output]` are optional).
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let mut sections = split_sections(text)?;
    let mut take_section = |name: &str| -> Option<Section> { sections.remove(name) };

    // [equation]
    let mut eq = take_section("equation").ok_or_else(|| ConfigError::Section {
        section: "equation".to_string(),
        message: "section is required".to_string(),
    })?;
    let equation = match eq.take("preset") {
        Some(preset) => match preset.as_str() {
            "dlss" => {
                if eq.take("beta").is_some() || eq.take("a").is_some() || eq.take("b").is_some() {
                    return Err(ConfigError::Section {
                        section: "equation".to_string(),
                        message: "preset dlss takes no coefficient keys".to_string(),
                    });
                }
                EquationSpec::Dlss
            }
            "thin-film" => {
                let beta = parse_scalar("equation", "beta", &eq.require("equation", "beta")?)?;
                EquationSpec::ThinFilm { beta }
            }
            other => {
                return Err(ConfigError::Section {
                    section: "equation".to_string(),
                    message: format!("unknown preset {other:?} (expected dlss|thin-film)"),
                })
            }
        },
        None => {
            let a = parse_scalar("equation", "a", &eq.require("equation", "a")?)?;
            let b = parse_scalar("equation", "b", &eq.require("equation", "b")?)?;
            let beta = parse_scalar("equation", "beta", &eq.require("equation", "beta")?)?;
            EquationSpec::Raw { a, b, beta }
        }
    };
    eq.finish("equation")?;

    // [entropy]
    let mut en = take_section("entropy").ok_or_else(|| ConfigError::Section {
        section: "entropy".to_string(),
        message: "section is required".to_string(),
    })?;
    let alpha: f64 = parse_scalar("entropy", "alpha", &en.require("entropy", "alpha")?)?;
    en.finish("entropy")?;

    // [scheme] (optional)
    let (variant, average) = match take_section("scheme") {
        Some(mut sc) => {
            let variant = match sc.take("variant") {
                Some(v) => parse_variant(&v)?,
                None => SchemeVariant::Central,
            };
            let average = match sc.take("average") {
                Some(a) => parse_average(&a)?,
                None => AverageRule::Identity,
            };
            sc.finish("scheme")?;
            (variant, average)
        }
        None => (SchemeVariant::Central, AverageRule::Identity),
    };

    // [grid]
    let mut gr = take_section("grid").ok_or_else(|| ConfigError::Section {
        section: "grid".to_string(),
        message: "section is required".to_string(),
    })?;
    let dims_raw = gr.require("grid", "dims")?;
    let dims: Vec<usize> = dims_raw
        .split_whitespace()
        .map(|tok| parse_scalar("grid", "dims", tok))
        .collect::<Result<_, _>>()?;
    if dims.is_empty() || dims.len() > 2 {
        return Err(ConfigError::Section {
            section: "grid".to_string(),
            message: format!("dims must list 1 or 2 extents, got {}", dims.len()),
        });
    }
    let h: f64 = match gr.take("h") {
        Some(raw) => parse_scalar("grid", "h", &raw)?,
        None => 1.0 / dims[0] as f64,
    };
    gr.finish("grid")?;

    // [initial]
    let mut init = take_section("initial").ok_or_else(|| ConfigError::Section {
        section: "initial".to_string(),
        message: "section is required".to_string(),
    })?;
    let preset = init.require("initial", "preset")?;
    let initial = match preset.as_str() {
        "cos16" => InitialSpec::Cos16,
        "step" => InitialSpec::Step,
        "sine" => InitialSpec::Sine,
        "sine-full" => InitialSpec::SineFull,
        "constant" => {
            let value = match init.take("value") {
                Some(raw) => parse_scalar("initial", "value", &raw)?,
                None => 1.0,
            };
            InitialSpec::Constant { value }
        }
        "random-positive" => {
            let seed = match init.take("seed") {
                Some(raw) => parse_scalar("initial", "seed", &raw)?,
                None => 0,
            };
            InitialSpec::RandomPositive { seed }
        }
        "image" => {
            let path = init.require("initial", "path")?;
            let floor = match init.take("floor") {
                Some(raw) => parse_scalar("initial", "floor", &raw)?,
                None => crate::image::DEFAULT_IMAGE_FLOOR,
            };
            InitialSpec::Image { path, floor }
        }
        other => {
            return Err(ConfigError::Section {
                section: "initial".to_string(),
                message: format!("unknown preset {other:?}"),
            })
        }
    };
    init.finish("initial")?;

    // [solver] (optional)
    let solver = match take_section("solver") {
        Some(mut sv) => {
            let defaults = SolverSpec::default();
            let method = match sv.take("method") {
                Some(raw) => parse_method(&raw)?,
                None => defaults.method,
            };
            let jacobian = match sv.take("jacobian") {
                Some(raw) => parse_jacobian(&raw)?,
                None => defaults.jacobian,
            };
            let mut scalar = |key: &str, fallback: f64| -> Result<f64, ConfigError> {
                match sv.take(key) {
                    Some(raw) => parse_scalar("solver", key, &raw),
                    None => Ok(fallback),
                }
            };
            let atol = scalar("atol", defaults.atol)?;
            let rtol = scalar("rtol", defaults.rtol)?;
            let dt_init = scalar("dt_init", defaults.dt_init)?;
            let dt_min = scalar("dt_min", defaults.dt_min)?;
            let dt_max = scalar("dt_max", defaults.dt_max)?;
            let max_steps = match sv.take("max_steps") {
                Some(raw) => parse_scalar("solver", "max_steps", &raw)?,
                None => defaults.max_steps,
            };
            sv.finish("solver")?;
            SolverSpec { method, atol, rtol, dt_init, dt_min, dt_max, max_steps, jacobian }
        }
        None => SolverSpec::default(),
    };

    // [output]
    let mut out = take_section("output").ok_or_else(|| ConfigError::Section {
        section: "output".to_string(),
        message: "section is required".to_string(),
    })?;
    let times: Vec<f64> = match out.take("times") {
        Some(raw) => raw
            .split_whitespace()
            .map(|tok| parse_scalar("output", "times", tok))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let t_end: f64 = parse_scalar("output", "t_end", &out.require("output", "t_end")?)?;
    let out_dir = out.take("dir").unwrap_or_else(|| "out".to_string());
    out.finish("output")?;

    if let Some(name) = sections.into_keys().next() {
        return Err(ConfigError::Section {
            section: name,
            message: "unknown section".to_string(),
        });
    }

    Ok(RunConfig {
        equation,
        alpha,
        variant,
        average,
        dims,
        h,
        initial,
        solver,
        times,
        t_end,
        out_dir,
    })
}

/// Command-line overrides layered on top of a parsed configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub n: Option<usize>,
    pub h: Option<f64>,
    pub t_end: Option<f64>,
    pub out_dir: Option<String>,
    pub variant: Option<SchemeVariant>,
    pub average: Option<AverageRule>,
}

/// Apply overrides; `n` rescales every axis and, unless `h` is also given,
/// resets the spacing to 1/n.
pub fn apply_overrides(config: &mut RunConfig, ov: &Overrides) {
    if let Some(alpha) = ov.alpha {
        config.alpha = alpha;
    }
    if let Some(beta) = ov.beta {
        config.equation = config.equation.with_beta(beta);
    }
    if let Some(a) = ov.a {
        config.equation = config.equation.with_a(a);
    }
    if let Some(b) = ov.b {
        config.equation = config.equation.with_b(b);
    }
    if let Some(n) = ov.n {
        for d in config.dims.iter_mut() {
            *d = n;
        }
        config.h = 1.0 / n as f64;
    }
    if let Some(h) = ov.h {
        config.h = h;
    }
    if let Some(t_end) = ov.t_end {
        config.t_end = t_end;
    }
    if let Some(dir) = &ov.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(variant) = ov.variant {
        config.variant = variant;
    }
    if let Some(average) = ov.average {
        config.average = average;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_configs() -> Vec<RunConfig> {
        let mut base = RunConfig::default_dlss(100);
        base.times = vec![1e-8, 1e-6, 1e-3];
        let mut film = RunConfig::default_thin_film(2.0, 64);
        film.alpha = 0.5;
        film.variant = SchemeVariant::Noncentral;
        film.average = AverageRule::Geometric;
        film.initial = InitialSpec::RandomPositive { seed: 42 };
        film.solver.method = MethodSpec::Rk45;
        film.solver.jacobian = JacobianSpec::MatrixFree;
        let mut raw = RunConfig::default_dlss(48);
        raw.equation = EquationSpec::Raw { a: 0.25, b: -0.125, beta: 1.5 };
        raw.initial = InitialSpec::Constant { value: 0.75 };
        raw.solver.dt_max = 0.5;
        let mut image = RunConfig::default_thin_film(2.0, 4);
        image.dims = vec![100, 77];
        image.h = 0.01;
        image.initial = InitialSpec::Image { path: "lantern.pgm".to_string(), floor: 0.01 };
        image.times = vec![3e-9, 1e-8, 1e-6];
        image.t_end = 1e-6;
        let mut stepc = RunConfig::default_dlss(200);
        stepc.initial = InitialSpec::Step;
        let mut sinef = RunConfig::default_dlss(128);
        sinef.initial = InitialSpec::SineFull;
        sinef.solver.method = MethodSpec::ImplicitEuler;
        vec![base, film, raw, image, stepc, sinef]
    }

    #[test]
    fn round_trip_is_exact() {
        for config in sample_configs() {
            let text = render(&config);
            let back = parse(&text).expect("rendered config parses");
            assert_eq!(back, config, "round trip changed:\n{text}");
        }
    }

    #[test]
    fn round_trip_preserves_infinite_dt_max() {
        let config = RunConfig::default_dlss(10);
        assert!(config.solver.dt_max.is_infinite());
        let back = parse(&render(&config)).unwrap();
        assert!(back.solver.dt_max.is_infinite());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "\n# leading comment\n[equation]\npreset = dlss # trailing\n\n[entropy]\nalpha = 0.0\n[grid]\ndims = 32\n[initial]\npreset = sine\n[output]\nt_end = 0.001\n";
        let config = parse(text).unwrap();
        assert_eq!(config.equation, EquationSpec::Dlss);
        assert_eq!(config.dims, vec![32]);
        assert_eq!(config.h, 1.0 / 32.0);
        assert_eq!(config.initial, InitialSpec::Sine);
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let text = "[equation]\npreset = dlss\nbogus = 1\n[entropy]\nalpha = 0.0\n[grid]\ndims = 32\n[initial]\npreset = sine\n[output]\nt_end = 1.0\n";
        let err = parse(text).unwrap_err();
        assert_eq!(
            err,
            ConfigError::Syntax {
                line: 3,
                message: "unknown key \"bogus\" in section [equation]".to_string()
            }
        );
    }

    #[test]
    fn unknown_preset_is_rejected() {
        let text = "[equation]\npreset = dlss\n[entropy]\nalpha = 0.0\n[grid]\ndims = 32\n[initial]\npreset = mystery\n[output]\nt_end = 1.0\n";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, ConfigError::Section { ref section, .. } if section == "initial"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let text = "[entropy]\nalpha = 0.0\nalpha = 1.0\n";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 3, .. }));
    }

    #[test]
    fn missing_section_is_rejected() {
        let err = parse("[entropy]\nalpha = 0.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Section { ref section, .. } if section == "equation"));
    }

    #[test]
    fn overrides_rewrite_equation_and_grid() {
        let mut config = RunConfig::default_dlss(100);
        let ov = Overrides {
            alpha: Some(1.0),
            beta: Some(2.0),
            n: Some(50),
            t_end: Some(0.5),
            variant: Some(SchemeVariant::Noncentral),
            ..Overrides::default()
        };
        apply_overrides(&mut config, &ov);
        assert_eq!(config.alpha, 1.0);
        assert_eq!(config.equation, EquationSpec::Raw { a: -2.0, b: 1.0, beta: 2.0 });
        assert_eq!(config.dims, vec![50]);
        assert_eq!(config.h, 0.02);
        assert_eq!(config.t_end, 0.5);
        assert_eq!(config.variant, SchemeVariant::Noncentral);
    }

    #[test]
    fn override_a_on_thin_film_moves_to_raw() {
        let mut config = RunConfig::default_thin_film(2.0, 10);
        apply_overrides(&mut config, &Overrides { a: Some(1.0), ..Overrides::default() });
        assert_eq!(config.equation, EquationSpec::Raw { a: 1.0, b: 0.0, beta: 2.0 });
    }
}
