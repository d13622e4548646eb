//! Experiment configuration files.
//!
//! Configs are flat INI-style text: `key = value` lines, `[section]`
//! headers, `#` comments. Keys before the first header are top-level
//! run settings; the recognized sections are `[distribution]`,
//! `[grid]`, `[pierce]`, and `[optimize]`. Unknown sections or keys
//! are errors (they are usually typos), and every diagnostic carries
//! the offending line number.
//!
//! ```text
//! # distortion decay of a lattice family under the uniform law
//! experiment = rate-scan
//! p = 2
//! norm = l2
//! seed = 7
//! samples = 20000
//!
//! [distribution]
//! kind = uniform_cube
//! corner = 0 0
//! edge = 1
//!
//! [grid]
//! kind = lattice
//! corner = 0 0
//! edge = 1
//! subdivisions = 8 10 12 14 16
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::core::{DistributionSpec, NormSpec, Point};
use crate::error::{Error, Result};
use crate::optimize::{OptimizeMethod, OptimizerConfig};
use crate::pierce::integer_root;

/// Which experiment a config (or CLI subcommand) requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Distortion of a grid family against its size, one CSV row per
    /// grid.
    RateScan,
    /// Paired dual / extended / nearest-neighbor distortion estimates
    /// on shared sample paths.
    Compare,
    /// Random-quantization error scan over grid sizes.
    PierceScan,
    /// A single distortion estimate for one grid.
    Distortion,
    /// The local error at one explicit site.
    FpEval,
    /// Grid optimization from an initial grid.
    Optimize,
    /// Normalized lattice distortion against the closed-form
    /// coefficient bound.
    CheckQdqBound,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ExperimentKind::RateScan => "rate-scan",
            ExperimentKind::Compare => "compare",
            ExperimentKind::PierceScan => "pierce-scan",
            ExperimentKind::Distortion => "distortion",
            ExperimentKind::FpEval => "fp-eval",
            ExperimentKind::Optimize => "optimize",
            ExperimentKind::CheckQdqBound => "check-qdq-bound",
        };
        f.write_str(name)
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "rate-scan" => Ok(ExperimentKind::RateScan),
            "compare" => Ok(ExperimentKind::Compare),
            "pierce-scan" => Ok(ExperimentKind::PierceScan),
            "distortion" => Ok(ExperimentKind::Distortion),
            "fp-eval" => Ok(ExperimentKind::FpEval),
            "optimize" => Ok(ExperimentKind::Optimize),
            "check-qdq-bound" => Ok(ExperimentKind::CheckQdqBound),
            other => Err(Error::Config(format!(
                "unknown experiment '{other}': expected rate-scan, compare, pierce-scan, \
                 distortion, fp-eval, optimize, or check-qdq-bound"
            ))),
        }
    }
}

/// The grid family an experiment runs over.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// Uniform lattices on an axis-aligned cube, one per subdivision
    /// count `m` (so `(m + 1)^d` points each).
    Lattice {
        corner: Vec<f64>,
        edge: f64,
        subdivisions: Vec<usize>,
    },
    /// The same lattices, each passed through the configured optimizer
    /// before measurement; needs an `[optimize]` section.
    Optimized {
        corner: Vec<f64>,
        edge: f64,
        subdivisions: Vec<usize>,
    },
    /// An explicit point list loaded from a whitespace-separated file.
    File { path: PathBuf },
}

/// Parameters of a random-quantization scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PierceSpec {
    /// Moment surplus: the law must have a finite `(p + eta)`-moment.
    pub eta: f64,
    /// Pareto tail index of the random grid generator; `None` accepts
    /// the default `p / (2 eta)`.
    pub delta: Option<f64>,
    /// Grid sizes to scan.
    pub n_values: Vec<usize>,
}

/// Fully parsed experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Experiment named in the file, if any; the CLI subcommand must
    /// agree when both are present.
    pub experiment: Option<ExperimentKind>,
    /// Moment exponent (default 2).
    pub p: f64,
    /// Norm errors are measured in (default l2).
    pub norm: NormSpec,
    /// Root RNG seed (default 0).
    pub seed: u64,
    /// Monte Carlo sample count (default 10000).
    pub samples: usize,
    /// Output file; stdout when absent.
    pub out: Option<PathBuf>,
    /// Emit rows as a JSON array instead of CSV.
    pub json: bool,
    /// Use the extended (everywhere-finite) functional.
    pub extended: bool,
    /// Evaluation site for `fp-eval`.
    pub site: Option<Point>,
    pub distribution: Option<DistributionSpec>,
    pub grid: Option<GridSpec>,
    pub pierce: Option<PierceSpec>,
    pub optimize: Option<OptimizerConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            p: 2.0,
            norm: NormSpec::L2,
            seed: 0,
            samples: 10_000,
            out: None,
            json: false,
            extended: false,
            site: None,
            distribution: None,
            grid: None,
            pierce: None,
            optimize: None,
        }
    }
}

/// Reads and parses a config file.
pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_experiment_config(&text).map_err(|e| prefix_path(path, e))
}

/// Prepends the file path to a config diagnostic, leaving other error
/// kinds untouched.
fn prefix_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Parses config text. See the module docs for the format.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    let mut sections = split_sections(text)?;
    let mut cfg = ExperimentConfig::default();

    if let Some(mut top) = sections.remove("") {
        if let Some(v) = top.take("experiment") {
            cfg.experiment = Some(v.value.parse().map_err(|e| at_line(e, v.line))?);
        }
        if let Some(v) = top.take("p") {
            cfg.p = v.parse_f64()?;
        }
        if let Some(v) = top.take("norm") {
            cfg.norm = v.value.parse().map_err(|e| at_line(e, v.line))?;
        }
        if let Some(v) = top.take("seed") {
            cfg.seed = v.parse_u64()?;
        }
        if let Some(v) = top.take("samples") {
            cfg.samples = v.parse_usize()?;
        }
        if let Some(v) = top.take("out") {
            cfg.out = Some(PathBuf::from(v.value));
        }
        if let Some(v) = top.take("json") {
            cfg.json = v.parse_bool()?;
        }
        if let Some(v) = top.take("extended") {
            cfg.extended = v.parse_bool()?;
        }
        if let Some(v) = top.take("site") {
            let coords = v.parse_f64_list()?;
            cfg.site = Some(Point::new(coords).map_err(|e| at_line(e, v.line))?);
        }
        top.finish()?;
    }
    if let Some(section) = sections.remove("distribution") {
        cfg.distribution = Some(parse_distribution(section)?);
    }
    if let Some(section) = sections.remove("grid") {
        cfg.grid = Some(parse_grid(section)?);
    }
    if let Some(section) = sections.remove("pierce") {
        cfg.pierce = Some(parse_pierce(section)?);
    }
    if let Some(section) = sections.remove("optimize") {
        cfg.optimize = Some(parse_optimize(section)?);
    }
    if let Some((name, section)) = sections.into_iter().next() {
        return Err(Error::Config(format!(
            "unknown section [{name}] (line {})",
            section.header_line
        )));
    }
    Ok(cfg)
}

fn parse_distribution(mut s: Section) -> Result<DistributionSpec> {
    let kind = s.require("kind")?;
    let spec = match kind.value.as_str() {
        "uniform_cube" => {
            let corner = s.require("corner")?.parse_f64_list()?;
            let edge = s.require("edge")?.parse_f64()?;
            let line = kind.line;
            DistributionSpec::uniform_cube(Point::new(corner)?, edge)
                .map_err(|e| at_line(e, line))?
        }
        "uniform_cube_union" => {
            let corners_entry = s.require("corners")?;
            let corners = corners_entry
                .value
                .split(';')
                .map(|chunk| {
                    let coords = parse_f64_words(chunk, "corners", corners_entry.line)?;
                    Point::new(coords).map_err(|e| at_line(e, corners_entry.line))
                })
                .collect::<Result<Vec<_>>>()?;
            let edge = s.require("edge")?.parse_f64()?;
            let weights = s.require("weights")?.parse_f64_list()?;
            DistributionSpec::uniform_cube_union(corners, edge, weights)
                .map_err(|e| at_line(e, kind.line))?
        }
        "gaussian" => {
            let dim = s.require("dim")?.parse_usize()?;
            DistributionSpec::gaussian(dim).map_err(|e| at_line(e, kind.line))?
        }
        "exponential" => {
            let dim = s.require("dim")?.parse_usize()?;
            let rate = s.require("rate")?.parse_f64()?;
            DistributionSpec::exponential(dim, rate).map_err(|e| at_line(e, kind.line))?
        }
        "pareto" => {
            let dim = s.require("dim")?.parse_usize()?;
            let delta = s.require("delta")?.parse_f64()?;
            DistributionSpec::pareto(dim, delta).map_err(|e| at_line(e, kind.line))?
        }
        "empirical" => {
            let file = s.require("points_file")?;
            let points = read_points_file(Path::new(&file.value))?;
            DistributionSpec::empirical(points).map_err(|e| at_line(e, file.line))?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown distribution kind '{other}' (line {}): expected uniform_cube, \
                 uniform_cube_union, gaussian, exponential, pareto, or empirical",
                kind.line
            )))
        }
    };
    s.finish()?;
    Ok(spec)
}

fn parse_grid(mut s: Section) -> Result<GridSpec> {
    let kind = s.require("kind")?;
    let spec = match kind.value.as_str() {
        "lattice" | "optimized" => {
            let corner = s.require("corner")?.parse_f64_list()?;
            let edge = s.require("edge")?.parse_f64()?;
            let subdivisions = s.take("subdivisions").map(|v| v.parse_usize_list()).transpose()?;
            let sizes = s.take("n");
            let subdivisions = match (subdivisions, sizes) {
                (Some(_), Some(n)) => {
                    return Err(Error::Config(format!(
                        "give either 'subdivisions' or 'n' in [grid], not both (line {})",
                        n.line
                    )))
                }
                (Some(m), None) => m,
                (None, Some(n_entry)) => {
                    let line = n_entry.line;
                    n_entry
                        .parse_usize_list()?
                        .into_iter()
                        .map(|n| subdivisions_for_size(n, corner.len(), line))
                        .collect::<Result<Vec<_>>>()?
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "[grid] kind = {} needs 'subdivisions' or 'n' (line {})",
                        kind.value, kind.line
                    )))
                }
            };
            if subdivisions.is_empty() {
                return Err(Error::Config(format!(
                    "[grid] needs at least one lattice size (line {})",
                    kind.line
                )));
            }
            if kind.value == "optimized" {
                GridSpec::Optimized { corner, edge, subdivisions }
            } else {
                GridSpec::Lattice { corner, edge, subdivisions }
            }
        }
        "file" => {
            let file = s.require("file")?;
            GridSpec::File { path: PathBuf::from(file.value) }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown grid kind '{other}' (line {}): expected lattice, optimized, or file",
                kind.line
            )))
        }
    };
    s.finish()?;
    Ok(spec)
}

/// Converts a requested total point count into a subdivision count:
/// `n` knots on a line means `n - 1` subdivisions, and in dimension d
/// the count must be a perfect d-th power of the per-axis knot count.
fn subdivisions_for_size(n: usize, d: usize, line: usize) -> Result<usize> {
    let axis = integer_root(n, d).ok_or_else(|| {
        Error::Config(format!(
            "grid size {n} is not a perfect {d}-th power (line {line})"
        ))
    })?;
    if axis < 2 {
        return Err(Error::Config(format!(
            "grid size {n} gives fewer than 2 knots per axis (line {line})"
        )));
    }
    Ok(axis - 1)
}

fn parse_pierce(mut s: Section) -> Result<PierceSpec> {
    let eta = s.require("eta")?.parse_f64()?;
    let delta = s.take("delta").map(|v| v.parse_f64()).transpose()?;
    let n_values = s.require("n")?.parse_usize_list()?;
    s.finish()?;
    Ok(PierceSpec { eta, delta, n_values })
}

fn parse_optimize(mut s: Section) -> Result<OptimizerConfig> {
    let method_entry = s.require("method")?;
    let method = match method_entry.value.to_ascii_lowercase().replace('-', "_").as_str() {
        "sgd" => OptimizeMethod::Sgd,
        "lloyd_like" | "lloyd" => OptimizeMethod::LloydLike,
        "exhaustive_1d" | "exhaustive1d" => OptimizeMethod::Exhaustive1d,
        other => {
            return Err(Error::Config(format!(
                "unknown optimize method '{other}' (line {}): expected sgd, lloyd_like, \
                 or exhaustive_1d",
                method_entry.line
            )))
        }
    };
    let mut config = OptimizerConfig::new(method);
    if let Some(v) = s.take("iterations") {
        config.iterations = v.parse_usize()?;
    }
    if let Some(v) = s.take("step_a") {
        config.step_a = v.parse_f64()?;
    }
    if let Some(v) = s.take("step_b") {
        config.step_b = v.parse_f64()?;
    }
    if let Some(v) = s.take("restarts") {
        config.restarts = v.parse_usize()?;
    }
    if let Some(v) = s.take("samples_per_eval") {
        config.samples_per_eval = v.parse_usize()?;
    }
    s.finish()?;
    Ok(config)
}

/// Reads a whitespace-separated point list: one point per line, `#`
/// comments and blank lines ignored. Every row must have the same
/// number of coordinates.
pub fn read_points_file(path: &Path) -> Result<Vec<Point>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_point_rows(&text).map_err(|e| prefix_path(path, e))
}

/// Parses point-list text (the `read_points_file` format).
pub fn parse_point_rows(text: &str) -> Result<Vec<Point>> {
    let mut points: Vec<Point> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw);
        if content.is_empty() {
            continue;
        }
        let coords = parse_f64_words(content, "point", line)?;
        let point = Point::new(coords).map_err(|e| at_line(e, line))?;
        if let Some(first) = points.first() {
            if first.dim() != point.dim() {
                return Err(Error::Config(format!(
                    "point on line {line} has {} coordinates, expected {}",
                    point.dim(),
                    first.dim()
                )));
            }
        }
        points.push(point);
    }
    if points.is_empty() {
        return Err(Error::Config("no points found".into()));
    }
    Ok(points)
}

/// A raw `key = value` occurrence.
#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

impl Entry {
    fn parse_f64(&self) -> Result<f64> {
        self.value
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("expected a number, got '{}' (line {})", self.value, self.line)))
    }

    fn parse_u64(&self) -> Result<u64> {
        self.value
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("expected an integer, got '{}' (line {})", self.value, self.line)))
    }

    fn parse_usize(&self) -> Result<usize> {
        self.value
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("expected an integer, got '{}' (line {})", self.value, self.line)))
    }

    fn parse_bool(&self) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(Error::Config(format!(
                "expected true or false, got '{}' (line {})",
                self.value, self.line
            ))),
        }
    }

    fn parse_f64_list(&self) -> Result<Vec<f64>> {
        parse_f64_words(&self.value, "value", self.line)
    }

    fn parse_usize_list(&self) -> Result<Vec<usize>> {
        self.value
            .split_whitespace()
            .map(|w| {
                w.parse::<usize>().map_err(|_| {
                    Error::Config(format!("expected an integer, got '{w}' (line {})", self.line))
                })
            })
            .collect()
    }
}

fn parse_f64_words(text: &str, what: &str, line: usize) -> Result<Vec<f64>> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Config(format!("empty {what} (line {line})")));
    }
    words
        .into_iter()
        .map(|w| {
            w.parse::<f64>()
                .map_err(|_| Error::Config(format!("expected a number, got '{w}' (line {line})")))
        })
        .collect()
}

/// One section's entries, drained key by key so leftovers can be
/// reported as unknown.
#[derive(Debug)]
struct Section {
    name: String,
    header_line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<Entry> {
        self.take(key).ok_or_else(|| {
            Error::Config(format!("missing key '{key}' in {}", self.describe()))
        })
    }

    fn finish(self) -> Result<()> {
        if let Some((key, entry)) = self.entries.into_iter().next() {
            return Err(Error::Config(format!(
                "unknown key '{key}' in {} (line {})",
                section_label(&self.name),
                entry.line
            )));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        section_label(&self.name)
    }
}

fn section_label(name: &str) -> String {
    if name.is_empty() {
        "the top-level section".to_string()
    } else {
        format!("[{name}]")
    }
}

fn at_line(e: Error, line: usize) -> Error {
    Error::Config(format!("{e} (line {line})"))
}

/// Drops `#` comments: a full-line comment, or a trailing one preceded
/// by whitespace.
fn strip_comment(raw: &str) -> &str {
    let trimmed = raw.trim();
    if trimmed.starts_with('#') {
        return "";
    }
    let cut = trimmed
        .char_indices()
        .find(|&(i, c)| c == '#' && trimmed[..i].ends_with(char::is_whitespace))
        .map_or(trimmed.len(), |(i, _)| i);
    trimmed[..cut].trim_end()
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current = String::new();
    sections.insert(
        String::new(),
        Section { name: String::new(), header_line: 0, entries: BTreeMap::new() },
    );
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw);
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("unterminated section header (line {line})")))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(Error::Config(format!("empty section name (line {line})")));
            }
            if sections.contains_key(&name) {
                return Err(Error::Config(format!("duplicate section [{name}] (line {line})")));
            }
            sections.insert(
                name.clone(),
                Section { name: name.clone(), header_line: line, entries: BTreeMap::new() },
            );
            current = name;
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            Error::Config(format!("expected 'key = value' or '[section]', got '{content}' (line {line})"))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("empty key (line {line})")));
        }
        let section = sections.get_mut(&current).expect("current section exists");
        if section.entries.contains_key(&key) {
            return Err(Error::Config(format!(
                "duplicate key '{key}' in {} (line {line})",
                section_label(&current)
            )));
        }
        section.entries.insert(key, Entry { value, line });
    }
    // The implicit top-level section stays even when empty; callers
    // simply find no keys in it.
    Ok(sections)
}
