//! Scenarios, batch execution, summaries, fits and result files.
//!
//! A batch is fully determined by its [`ExperimentSpec`]: each `(n, m)` cell
//! gets the sub-seed `derive_seed(seed, [n, m])` and run `i` uses stream `i`
//! of it, so results do not depend on thread count or on which other cells
//! are part of the sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::adversary::{adversarial_run, AdversarySchedule};
use crate::config::Configuration;
use crate::engine::{Caps, Marker, ProcessState, ProtocolVariant};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, RngStream};

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "n",
    "m",
    "variant",
    "stream",
    "events",
    "t_disc96ln",
    "t_disc_half_avg",
    "t_disc8ln",
    "t_overloaded_n",
    "t_disc_le1",
    "t_perfect",
    "truncated",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    AllInOne,
    /// One bin at `avg + 1`, one at `avg - 1`, the rest at `avg`.
    TwoBinPerturbation,
    /// Every ball in an independent uniform bin.
    UniformRandom,
    /// Every ball in the lesser loaded of two uniform bins.
    TwoChoicePlacement,
    /// Loads read from a file, separated by whitespace or commas.
    FromFile(PathBuf),
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "all_in_one" => Self::AllInOne,
            "two_bin_perturbation" => Self::TwoBinPerturbation,
            "uniform_random" => Self::UniformRandom,
            "two_choice_placement" => Self::TwoChoicePlacement,
            other => match other.strip_prefix("from_file:") {
                Some(path) => Self::FromFile(PathBuf::from(path)),
                None => return Err(Error::Parse(format!("unknown scenario `{s}`"))),
            },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AllInOne => "all_in_one",
            Self::TwoBinPerturbation => "two_bin_perturbation",
            Self::UniformRandom => "uniform_random",
            Self::TwoChoicePlacement => "two_choice_placement",
            Self::FromFile(_) => "from_file",
        }
    }

    /// Initial configuration. Random scenarios draw from `rng`; the others
    /// leave it untouched.
    pub fn generate(&self, n: usize, m: u64, rng: &mut RngStream) -> Result<Configuration> {
        if n == 0 {
            return Err(Error::InvalidConfiguration("no bins".into()));
        }
        match self {
            Self::AllInOne => Configuration::all_in_one(n, m),
            Self::TwoBinPerturbation => {
                let avg = m / n as u64;
                if n < 2 || !m.is_multiple_of(n as u64) || avg == 0 {
                    return Err(Error::InvalidConfiguration(format!(
                        "two_bin_perturbation needs n >= 2, n | m and m >= n (n={n}, m={m})"
                    )));
                }
                let mut loads = vec![avg; n];
                loads[0] += 1;
                loads[n - 1] -= 1;
                Configuration::new(loads)
            }
            Self::UniformRandom => {
                let mut loads = vec![0; n];
                for _ in 0..m {
                    loads[rng.index(n)] += 1;
                }
                Configuration::new(loads)
            }
            Self::TwoChoicePlacement => {
                let mut loads = vec![0u64; n];
                for _ in 0..m {
                    let (a, b) = (rng.index(n), rng.index(n));
                    let i = if loads[b] < loads[a] { b } else { a };
                    loads[i] += 1;
                }
                Configuration::new(loads)
            }
            Self::FromFile(path) => {
                let config = read_loads(path)?;
                if config.n() != n || config.m() != m {
                    return Err(Error::InvalidConfiguration(format!(
                        "{} holds n={}, m={}, expected n={n}, m={m}",
                        path.display(),
                        config.n(),
                        config.m()
                    )));
                }
                Ok(config)
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FromFile(p) => write!(f, "from_file:{}", p.display()),
            other => f.write_str(other.name()),
        }
    }
}

pub fn read_loads(path: &Path) -> Result<Configuration> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let loads = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Parse(format!("{}: bad load `{t}`", path.display())))
        })
        .collect::<Result<Vec<u64>>>()?;
    Configuration::new(loads)
}

/// Ball count as a function of `n`: a literal, `n`, `n^2`, `k*n`, `n*k` or
/// `n/k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BallCount {
    Fixed(u64),
    Times(u64),
    Square,
    Divided(u64),
}

impl BallCount {
    pub fn parse(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Parse(format!("bad ball count `{s}`"));
        let num = |x: &str| x.parse::<u64>().map_err(|_| bad());
        if t == "n" {
            return Ok(Self::Times(1));
        }
        if t == "n^2" || t == "n*n" {
            return Ok(Self::Square);
        }
        if let Some(k) = t.strip_prefix("n/") {
            let k = num(k)?;
            return if k == 0 {
                Err(bad())
            } else {
                Ok(Self::Divided(k))
            };
        }
        if let Some(k) = t.strip_suffix("*n") {
            return Ok(Self::Times(num(k)?));
        }
        if let Some(k) = t.strip_prefix("n*") {
            return Ok(Self::Times(num(k)?));
        }
        parse_count("m", &t).map(Self::Fixed).map_err(|_| bad())
    }

    pub fn eval(self, n: usize) -> Result<u64> {
        let n = n as u64;
        match self {
            Self::Fixed(m) => Ok(m),
            Self::Times(k) => Ok(k * n),
            Self::Square => Ok(n * n),
            Self::Divided(k) if n.is_multiple_of(k) => Ok(n / k),
            Self::Divided(k) => Err(Error::InvalidConfiguration(format!(
                "{k} does not divide n={n}"
            ))),
        }
    }
}

impl fmt::Display for BallCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(m) => write!(f, "{m}"),
            Self::Times(1) => write!(f, "n"),
            Self::Times(k) => write!(f, "{k}*n"),
            Self::Square => write!(f, "n^2"),
            Self::Divided(k) => write!(f, "n/{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(Self::JsonLines),
            _ => Err(Error::Parse(format!("unknown format `{s}`"))),
        }
    }
}

/// Everything needed to replay a batch.
///
/// The text form is one `key = value` per line with `#` comments; keys are
/// `scenario`, `n`, `m` (comma lists for sweeps), `variant`, `schedule`,
/// `runs`, `seed`, `max_events`, `max_clock`, `stop`, `out` and `format`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub n: Vec<usize>,
    pub m: Vec<BallCount>,
    pub variant: ProtocolVariant,
    pub schedule: AdversarySchedule,
    pub runs: u64,
    pub seed: u64,
    pub caps: Caps,
    /// The run ends when this marker first holds.
    pub stop: Marker,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::AllInOne,
            n: vec![16],
            m: vec![BallCount::Square],
            variant: ProtocolVariant::NonStrict,
            schedule: AdversarySchedule::None,
            runs: 100,
            seed: 0,
            caps: Caps::default(),
            stop: Marker::Perfect,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

fn parse_list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: bad value `{value}`")))
}

/// Integer that may be written in scientific notation, such as `1e6`.
pub fn parse_count(key: &str, value: &str) -> Result<u64> {
    let v = value.trim();
    if let Ok(x) = v.parse::<u64>() {
        return Ok(x);
    }
    match v.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x < 1.8e19 => Ok(x as u64),
        _ => Err(Error::Parse(format!("{key}: bad count `{value}`"))),
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            spec.set(key.trim(), value.trim())?;
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key, as in the file format. Used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = Scenario::parse(value)?,
            "n" => self.n = parse_list(value, |s| parse_num("n", s))?,
            "m" => self.m = parse_list(value, BallCount::parse)?,
            "variant" => self.variant = ProtocolVariant::parse(value)?,
            "schedule" => self.schedule = AdversarySchedule::parse(value)?,
            "runs" => self.runs = parse_count(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "max_events" => self.caps.max_events = parse_count(key, value)?,
            "max_clock" => self.caps.max_clock = parse_num(key, value)?,
            "stop" => self.stop = Marker::parse(value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = OutputFormat::parse(value)?,
            _ => return Err(Error::Parse(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// All `(n, m)` cells: every `n` combined with every ball count.
    pub fn cells(&self) -> Result<Vec<(usize, u64)>> {
        if self.n.is_empty() || self.m.is_empty() {
            return Err(Error::InvalidConfiguration("empty n or m list".into()));
        }
        let mut cells = Vec::new();
        for &n in &self.n {
            for m in &self.m {
                cells.push((n, m.eval(n)?));
            }
        }
        Ok(cells)
    }
}

/// One run of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub n: usize,
    pub m: u64,
    pub variant: String,
    pub stream: u64,
    pub events: u64,
    /// Indexed like [`Marker::ALL`]. Empty if never reached, either because
    /// the run was truncated or because the threshold lies beyond the stop
    /// marker (for instance `disc <= avg/2` when `avg < 2`).
    pub markers: [Option<f64>; 6],
    pub truncated: bool,
}

impl RunRecord {
    pub fn marker(&self, marker: Marker) -> Option<f64> {
        self.markers[marker_index(marker)]
    }
}

fn marker_index(marker: Marker) -> usize {
    Marker::ALL
        .iter()
        .position(|&m| m == marker)
        .expect("listed")
}

/// Runs `runs` independent processes on cell `(n, m)`.
pub fn run_cell(spec: &ExperimentSpec, n: usize, m: u64) -> Result<Vec<RunRecord>> {
    let cell_seed = derive_seed(spec.seed, &[n as u64, m]);
    let scenario = spec.scenario.name();
    let variant = spec.variant.name();
    (0..spec.runs)
        .into_par_iter()
        .map(|stream| {
            let mut rng = RngStream::new(cell_seed, stream);
            let config = spec.scenario.generate(n, m, &mut rng)?;
            let mut state = ProcessState::new(config);
            let stop = spec.stop;
            let report = adversarial_run(
                &mut state,
                &spec.schedule,
                spec.variant,
                &mut rng,
                |s| stop.holds(s),
                spec.caps,
            )?;
            Ok(RunRecord {
                scenario: scenario.to_string(),
                n,
                m,
                variant: variant.to_string(),
                stream,
                events: report.events,
                truncated: report.is_truncated(),
                markers: report.markers,
            })
        })
        .collect()
}

/// Location and spread of one marker over the runs that reached it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    /// Sample standard error `sd / sqrt(count)`.
    pub se: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
}

impl MarkerStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len(),
            mean,
            sd,
            se: sd / k.sqrt(),
            p50: quantile(&sorted, 0.5),
            p95: quantile(&sorted, 0.95),
            p99: quantile(&sorted, 0.99),
        })
    }
}

/// Linear interpolation between order statistics; `sorted` must be sorted
/// and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scenario: String,
    pub n: usize,
    pub m: u64,
    pub variant: String,
    pub runs: usize,
    pub truncated: usize,
    /// Indexed like [`Marker::ALL`].
    pub markers: [Option<MarkerStats>; 6],
}

impl CellSummary {
    pub fn marker(&self, marker: Marker) -> Option<&MarkerStats> {
        self.markers[marker_index(marker)].as_ref()
    }
}

impl fmt::Display for CellSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} n={} m={} {}: {} runs, {} truncated",
            self.scenario, self.n, self.m, self.variant, self.runs, self.truncated
        )?;
        for (marker, stats) in Marker::ALL.iter().zip(&self.markers) {
            match stats {
                Some(s) => writeln!(
                    f,
                    "  {:<16} count {:>7}  mean {:>12.6}  se {:>10.6}  sd {:>10.6}  p50 {:>10.4}  p95 {:>10.4}  p99 {:>10.4}",
                    marker.column(), s.count, s.mean, s.se, s.sd, s.p50, s.p95, s.p99
                )?,
                None => writeln!(f, "  {:<16} not reached", marker.column())?,
            }
        }
        Ok(())
    }
}

/// Groups records by `(scenario, n, m, variant)` in first-seen order.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<(String, usize, u64, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.scenario.clone(), r.n, r.m, r.variant.clone());
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let markers = std::array::from_fn(|i| {
                let values: Vec<f64> = rows.iter().filter_map(|r| r.markers[i]).collect();
                MarkerStats::from_values(&values)
            });
            CellSummary {
                scenario: key.0,
                n: key.1,
                m: key.2,
                variant: key.3,
                runs: rows.len(),
                truncated: rows.iter().filter(|r| r.truncated).count(),
                markers,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<CellSummary>,
}

/// Runs every cell of the experiment; records are ordered by cell, then stream.
pub fn run_batch(spec: &ExperimentSpec) -> Result<Batch> {
    let mut records = Vec::new();
    for (n, m) in spec.cells()? {
        records.extend(run_cell(spec, n, m)?);
    }
    let summaries = summarize(&records);
    Ok(Batch { records, summaries })
}

/// Least-squares fit of `y = a + b ln x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

/// Fits `mean = a + b ln n` over `(n, mean)` points. Needs at least three
/// points with at least two distinct `n`. Constant data yields `R^2 = 1`.
pub fn scaling_fit(points: &[(usize, f64)]) -> Result<LogFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} groups, need 3",
            points.len()
        )));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * k {
        return Err(Error::DegenerateFit("all n equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(LogFit { a, b, r2 })
}

/// Decimal rendering with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else if (exp as usize) < digits.len() - 1 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("{digits}{}", "0".repeat(exp as usize + 1 - digits.len()))
    };
    format!("{sign}{body}")
}

fn csv_row(r: &RunRecord) -> csv::StringRecord {
    let mut row = csv::StringRecord::new();
    row.push_field(&r.scenario);
    row.push_field(&r.n.to_string());
    row.push_field(&r.m.to_string());
    row.push_field(&r.variant);
    row.push_field(&r.stream.to_string());
    row.push_field(&r.events.to_string());
    for t in &r.markers {
        row.push_field(&t.map(format_sig9).unwrap_or_default());
    }
    row.push_field(if r.truncated { "1" } else { "0" });
    row
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(&csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonRow<'a> {
    scenario: &'a str,
    n: usize,
    m: u64,
    variant: &'a str,
    stream: u64,
    events: u64,
    t_disc96ln: Option<f64>,
    t_disc_half_avg: Option<f64>,
    t_disc8ln: Option<f64>,
    t_overloaded_n: Option<f64>,
    t_disc_le1: Option<f64>,
    t_perfect: Option<f64>,
    truncated: bool,
}

pub fn write_json_lines<W: Write>(records: &[RunRecord], mut out: W) -> std::io::Result<()> {
    for r in records {
        let [a, b, c, d, e, f] = r.markers;
        let row = JsonRow {
            scenario: &r.scenario,
            n: r.n,
            m: r.m,
            variant: &r.variant,
            stream: r.stream,
            events: r.events,
            t_disc96ln: a,
            t_disc_half_avg: b,
            t_disc8ln: c,
            t_overloaded_n: d,
            t_disc_le1: e,
            t_perfect: f,
            truncated: r.truncated,
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes `records` to `path` in the given format.
pub fn emit(records: &[RunRecord], format: OutputFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => write_csv(records, out).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        }),
        OutputFormat::JsonLines => write_json_lines(records, out).map_err(|e| Error::io(path, e)),
    }
}

/// Parses a file written by [`emit`] in CSV format.
pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let bad = |col: &str| Error::Parse(format!("{} row {}: bad {col}", path.display(), i + 1));
        let field = |k: usize| row.get(k).ok_or_else(|| bad(CSV_HEADER[k]));
        let num = |k: usize| -> Result<u64> { field(k)?.parse().map_err(|_| bad(CSV_HEADER[k])) };
        let mut markers = [None; 6];
        for (j, slot) in markers.iter_mut().enumerate() {
            let s = field(6 + j)?;
            if !s.is_empty() {
                *slot = Some(s.parse().map_err(|_| bad(CSV_HEADER[6 + j]))?);
            }
        }
        records.push(RunRecord {
            scenario: field(0)?.to_string(),
            n: num(1)? as usize,
            m: num(2)?,
            variant: field(3)?.to_string(),
            stream: num(4)?,
            events: num(5)?,
            markers,
            truncated: match field(12)? {
                "1" => true,
                "0" => false,
                _ => return Err(bad("truncated")),
            },
        });
    }
    Ok(records)
}
