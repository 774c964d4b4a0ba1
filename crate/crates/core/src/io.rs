//! Versioned plain-text artifact formats.
//!
//! Every artifact starts with a `# semimarkov <kind> v<version>` line and a
//! block of `key=value` lines; row data follows. Floats are written with
//! their shortest round-trip representation, so write → read → write is
//! byte-identical. Readers reject unknown kinds and versions.

use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{AcfCurve, SweepResult};
use crate::discretization::{GridMode, IndexGrid, ReturnGrid, StateSeries};
use crate::error::{Error, Result};
use crate::index::IndexConfig;
use crate::indexed_kernel::IndexedKernel;
use crate::ingestion::{PriceSeries, TradingDay};
use crate::scalar::Real;
use crate::simulate::{Trajectory, GENERATOR_ID};
use crate::smc::{ExtractOptions, SemiMarkovKernel};

pub const FORMAT_VERSION: u32 = 1;

/// SHA-256 of a byte string, hex encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn header(kind: &str) -> String {
    format!("# semimarkov {kind} v{FORMAT_VERSION}\n")
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

struct Reader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    kind: &'static str,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, kind: &'static str) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let first = lines.next().map(|(_, l)| l).unwrap_or("");
        let prefix = format!("# semimarkov {kind} v");
        let version = first
            .strip_prefix(&prefix)
            .ok_or_else(|| Error::Format(format!("not a {kind} artifact")))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Version {
                found: version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        Ok(Self { lines, kind })
    }

    fn err(&self, line: usize, msg: impl Display) -> Error {
        Error::Format(format!("{} artifact, line {}: {msg}", self.kind, line + 1))
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        self.lines
            .next()
            .ok_or_else(|| Error::Format(format!("{} artifact truncated", self.kind)))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let (n, line) = self.next_line()?;
        match line.split_once('=') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(self.err(n, format!("expected `{key}=`"))),
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (n, line) = self.next_line()?;
        match line.split_once('=') {
            Some((k, v)) if k == key => v.parse().map_err(|_| self.err(n, format!("bad value for `{key}`"))),
            _ => Err(self.err(n, format!("expected `{key}=`"))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let raw = self.field(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(';')
            .map(|x| x.parse().map_err(|_| Error::Format(format!("bad entry `{x}` in `{key}`"))))
            .collect()
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self, key: &str) -> Result<T> {
        let raw = self.field(key)?;
        serde_json::from_str(raw).map_err(|e| Error::Format(format!("`{key}`: {e}")))
    }

    /// Splits the next `n` lines on commas into exactly `width` fields.
    fn rows(&mut self, n: usize, width: usize) -> Result<Vec<Vec<&'a str>>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let (k, line) = self.next_line()?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != width {
                return Err(self.err(k, format!("expected {width} fields")));
            }
            out.push(fields);
        }
        Ok(out)
    }

    fn finish(mut self) -> Result<()> {
        match self.lines.find(|(_, l)| !l.is_empty()) {
            Some((n, _)) => Err(self.err(n, "trailing content")),
            None => Ok(()),
        }
    }
}

fn num<T: FromStr>(raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Format(format!("bad number `{raw}`")))
}

pub fn write_price_series<F: Real>(prices: &PriceSeries<F>) -> String {
    let mut out = header("price-series");
    out += &format!("symbol={}\n", prices.symbol);
    out += &format!("calendar={}\n", prices.calendar_id);
    out += &format!("rule={}\n", prices.rule);
    out += &format!("days={}\n", prices.days.len());
    for day in &prices.days {
        out += &format!("day={},{},{}\n", day.date, day.first_minute, day.prices.len());
        for (k, p) in day.prices.iter().enumerate() {
            out += &format!("{},{p}\n", day.first_minute + k);
        }
    }
    out
}

pub fn read_price_series<F: Real>(text: &str) -> Result<PriceSeries<F>> {
    let mut r = Reader::new(text, "price-series")?;
    let symbol = r.field("symbol")?.to_string();
    let calendar_id = r.field("calendar")?.to_string();
    let rule = r.field("rule")?.to_string();
    let num_days: usize = r.parsed("days")?;
    let mut days = Vec::with_capacity(num_days);
    for _ in 0..num_days {
        let head: Vec<&str> = r.field("day")?.split(',').collect();
        if head.len() != 3 {
            return Err(Error::Format("bad day header".into()));
        }
        let date = NaiveDate::parse_from_str(head[0], "%Y-%m-%d").map_err(|e| Error::Format(e.to_string()))?;
        let first_minute: usize = num(head[1])?;
        let len: usize = num(head[2])?;
        let mut prices = Vec::with_capacity(len);
        for (k, row) in r.rows(len, 2)?.into_iter().enumerate() {
            if num::<usize>(row[0])? != first_minute + k {
                return Err(Error::Format(format!("minute rows of {date} are not consecutive")));
            }
            let p: F = num(row[1])?;
            if !(p > F::zero()) {
                return Err(Error::Format(format!("non-positive price on {date}")));
            }
            prices.push(p);
        }
        days.push(TradingDay {
            date,
            first_minute,
            prices,
        });
    }
    r.finish()?;
    Ok(PriceSeries {
        symbol,
        calendar_id,
        rule,
        days,
    })
}

fn write_grid<F: Real>(out: &mut String, grid: &ReturnGrid<F>) {
    *out += &format!("grid={}\n", json(&grid.mode));
    *out += &format!("thresholds={}\n", join(&grid.thresholds));
    *out += &format!("state_values={}\n", join(&grid.state_values));
}

fn read_grid<F: Real>(r: &mut Reader) -> Result<ReturnGrid<F>> {
    let mode: GridMode = r.json("grid")?;
    let grid = ReturnGrid {
        mode,
        thresholds: r.list("thresholds")?,
        state_values: r.list("state_values")?,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn write_state_series<F: Real>(series: &StateSeries<F>) -> String {
    let mut out = header("state-series");
    write_grid(&mut out, &series.grid);
    out += &format!("day_starts={}\n", join(&series.day_starts));
    out += &format!("length={}\n", series.len());
    for s in &series.states {
        out += &format!("{s}\n");
    }
    out
}

pub fn read_state_series<F: Real>(text: &str) -> Result<StateSeries<F>> {
    let mut r = Reader::new(text, "state-series")?;
    let grid = read_grid(&mut r)?;
    let day_starts: Vec<usize> = r.list("day_starts")?;
    let len: usize = r.parsed("length")?;
    let mut states = Vec::with_capacity(len);
    for row in r.rows(len, 1)? {
        states.push(num(row[0])?);
    }
    r.finish()?;
    StateSeries::with_days(states, day_starts, grid).map_err(|e| Error::Format(e.to_string()))
}

/// A persisted kernel with the conventions it was estimated under and the
/// state values of its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFile<F> {
    pub kernel: SemiMarkovKernel<F>,
    pub extract: ExtractOptions,
    pub state_values: Vec<F>,
}

/// Estimated kernels are stored as sparse `i,j,t,count` rows; kernels built
/// from explicit laws as sparse `i,j,t,mass` rows.
pub fn write_kernel<F: Real>(file: &KernelFile<F>) -> String {
    let k = &file.kernel;
    let s = k.num_states();
    let mut out = header("kernel");
    out += &format!("states={s}\n");
    out += &format!("t_max={}\n", k.t_max());
    out += &format!("allow_self_transitions={}\n", file.extract.allow_self_transitions);
    out += &format!("concatenate_days={}\n", file.extract.concatenate_days);
    out += &format!("fallback={}\n", k.fallback_enabled());
    out += &format!("state_values={}\n", join(&file.state_values));
    let mut rows = Vec::new();
    match k.counts() {
        Some(counts) => {
            out += "body=counts\n";
            let width = k.t_max() + 1;
            for (idx, &c) in counts.by_sojourn.iter().enumerate() {
                if c > 0 {
                    let (cell, t) = (idx / width, idx % width);
                    rows.push(format!("{},{},{t},{c}\n", cell / s, cell % s));
                }
            }
        }
        None => {
            out += "body=mass\n";
            for i in 0..s {
                for j in 0..s {
                    for t in 1..=k.t_max() {
                        let x = k.observed_mass(i, j, t);
                        if x > F::zero() {
                            rows.push(format!("{i},{j},{t},{x}\n"));
                        }
                    }
                }
            }
        }
    }
    out += &format!("entries={}\n", rows.len());
    out.extend(rows);
    out
}

fn sparse_cell(row: &[&str], s: usize, t_max: usize) -> Result<usize> {
    let (i, j, t): (usize, usize, usize) = (num(row[0])?, num(row[1])?, num(row[2])?);
    if i >= s || j >= s || t == 0 || t > t_max {
        return Err(Error::Format(format!("entry ({i}, {j}, {t}) out of range")));
    }
    Ok((i * s + j) * (t_max + 1) + t)
}

pub fn read_kernel<F: Real>(text: &str) -> Result<KernelFile<F>> {
    let mut r = Reader::new(text, "kernel")?;
    let s: usize = r.parsed("states")?;
    let t_max: usize = r.parsed("t_max")?;
    let extract = ExtractOptions {
        allow_self_transitions: r.parsed("allow_self_transitions")?,
        concatenate_days: r.parsed("concatenate_days")?,
    };
    let fallback: bool = r.parsed("fallback")?;
    let state_values: Vec<F> = r.list("state_values")?;
    if s == 0 || t_max == 0 || state_values.len() != s {
        return Err(Error::Format("inconsistent kernel header".into()));
    }
    let body = r.field("body")?;
    let entries: usize = r.parsed("entries")?;
    let rows = r.rows(entries, 4)?;
    let size = s * s * (t_max + 1);
    let kernel = match body {
        "counts" => {
            let mut counts = vec![0u64; size];
            for row in rows {
                counts[sparse_cell(&row, s, t_max)?] = num(row[3])?;
            }
            SemiMarkovKernel::from_counts(s, t_max, counts, fallback)?
        }
        "mass" => {
            let mut b = vec![F::zero(); size];
            for row in rows {
                b[sparse_cell(&row, s, t_max)?] = num(row[3])?;
            }
            SemiMarkovKernel::from_masses(s, t_max, b, fallback)?
        }
        other => return Err(Error::Format(format!("unknown kernel body `{other}`"))),
    };
    r.finish()?;
    Ok(KernelFile {
        kernel,
        extract,
        state_values,
    })
}

/// A persisted indexed kernel with the index definition it was estimated under.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedKernelFile<F> {
    pub kernel: IndexedKernel<F>,
    pub index: IndexConfig,
    pub extract: ExtractOptions,
    pub state_values: Vec<F>,
}

/// Only estimated indexed kernels can be written: the body is the per-level
/// count table as sparse `v,i,j,t,count` rows.
pub fn write_indexed_kernel<F: Real>(file: &IndexedKernelFile<F>) -> Result<String> {
    let k = &file.kernel;
    let s = k.num_states();
    let width = k.t_max() + 1;
    let mut out = header("indexed-kernel");
    out += &format!("states={s}\n");
    out += &format!("levels={}\n", k.num_levels());
    out += &format!("t_max={}\n", k.t_max());
    out += &format!("allow_self_transitions={}\n", file.extract.allow_self_transitions);
    out += &format!("concatenate_days={}\n", file.extract.concatenate_days);
    out += &format!("fallback={}\n", k.unconditional().fallback_enabled());
    out += &format!("backoff_threshold={}\n", k.backoff_threshold());
    out += &format!("index={}\n", json(&file.index));
    out += &format!("index_initial={}\n", k.index_initial());
    out += &format!("index_thresholds={}\n", join(&k.grid().thresholds));
    out += &format!("state_values={}\n", join(&file.state_values));
    let backed: Vec<String> = (0..s)
        .flat_map(|i| (0..k.num_levels()).map(move |v| (i, v)))
        .filter(|&(i, v)| k.is_backed_off(i, v))
        .map(|(i, v)| format!("{i}:{v}"))
        .collect();
    out += &format!("backed_off={}\n", backed.join(";"));
    let mut rows = Vec::new();
    for v in 0..k.num_levels() {
        let counts = k.level_counts(v);
        if counts.is_empty() {
            return Err(Error::Usage("only estimated indexed kernels can be written".into()));
        }
        for (idx, &c) in counts.iter().enumerate() {
            if c > 0 {
                let (cell, t) = (idx / width, idx % width);
                rows.push(format!("{v},{},{},{t},{c}\n", cell / s, cell % s));
            }
        }
    }
    out += &format!("entries={}\n", rows.len());
    out.extend(rows);
    Ok(out)
}

pub fn read_indexed_kernel<F: Real>(text: &str) -> Result<IndexedKernelFile<F>> {
    let mut r = Reader::new(text, "indexed-kernel")?;
    let s: usize = r.parsed("states")?;
    let levels: usize = r.parsed("levels")?;
    let t_max: usize = r.parsed("t_max")?;
    let extract = ExtractOptions {
        allow_self_transitions: r.parsed("allow_self_transitions")?,
        concatenate_days: r.parsed("concatenate_days")?,
    };
    let fallback: bool = r.parsed("fallback")?;
    let backoff: u64 = r.parsed("backoff_threshold")?;
    let index: IndexConfig = r.json("index")?;
    let initial: F = r.parsed("index_initial")?;
    let grid = IndexGrid::new(r.list("index_thresholds")?).map_err(|e| Error::Format(e.to_string()))?;
    let state_values: Vec<F> = r.list("state_values")?;
    let backed_off = r.field("backed_off")?.to_string();
    if s == 0 || t_max == 0 || levels != grid.num_levels() || state_values.len() != s {
        return Err(Error::Format("inconsistent indexed-kernel header".into()));
    }
    let entries: usize = r.parsed("entries")?;
    let size = s * s * (t_max + 1);
    let mut tables = vec![vec![0u64; size]; levels];
    for row in r.rows(entries, 5)? {
        let v: usize = num(row[0])?;
        if v >= levels {
            return Err(Error::Format(format!("level {v} out of range")));
        }
        tables[v][sparse_cell(&row[1..], s, t_max)?] = num(row[4])?;
    }
    r.finish()?;
    let kernel = IndexedKernel::from_level_counts(s, t_max, grid, tables, backoff, fallback, initial)?;
    let recomputed: Vec<String> = (0..s)
        .flat_map(|i| (0..levels).map(move |v| (i, v)))
        .filter(|&(i, v)| kernel.is_backed_off(i, v))
        .map(|(i, v)| format!("{i}:{v}"))
        .collect();
    if recomputed.join(";") != backed_off {
        return Err(Error::Format("back-off markers disagree with the counts".into()));
    }
    Ok(IndexedKernelFile {
        kernel,
        index,
        extract,
        state_values,
    })
}

/// Index values at jump epochs and, optionally, at every minute.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFile<F> {
    pub config: IndexConfig,
    pub initial: F,
    pub jump_times: Vec<u64>,
    pub jump_states: Vec<usize>,
    pub values: Vec<F>,
    pub minute_values: Vec<F>,
}

pub fn write_index<F: Real>(file: &IndexFile<F>) -> String {
    let mut out = header("index");
    out += &format!("index={}\n", json(&file.config));
    out += &format!("initial={}\n", file.initial);
    out += &format!("jumps={}\n", file.values.len());
    for n in 0..file.values.len() {
        out += &format!("{n},{},{},{}\n", file.jump_times[n], file.jump_states[n], file.values[n]);
    }
    out += &format!("minutes={}\n", file.minute_values.len());
    for (t, u) in file.minute_values.iter().enumerate() {
        out += &format!("{t},{u}\n");
    }
    out
}

pub fn read_index<F: Real>(text: &str) -> Result<IndexFile<F>> {
    let mut r = Reader::new(text, "index")?;
    let config: IndexConfig = r.json("index")?;
    let initial: F = r.parsed("initial")?;
    let jumps: usize = r.parsed("jumps")?;
    let mut file = IndexFile {
        config,
        initial,
        jump_times: Vec::with_capacity(jumps),
        jump_states: Vec::with_capacity(jumps),
        values: Vec::with_capacity(jumps),
        minute_values: Vec::new(),
    };
    for (n, row) in r.rows(jumps, 4)?.into_iter().enumerate() {
        if num::<usize>(row[0])? != n {
            return Err(Error::Format("jump rows out of order".into()));
        }
        file.jump_times.push(num(row[1])?);
        file.jump_states.push(num(row[2])?);
        file.values.push(num(row[3])?);
    }
    let minutes: usize = r.parsed("minutes")?;
    for (t, row) in r.rows(minutes, 2)?.into_iter().enumerate() {
        if num::<usize>(row[0])? != t {
            return Err(Error::Format("minute rows out of order".into()));
        }
        file.minute_values.push(num(row[1])?);
    }
    r.finish()?;
    Ok(file)
}

/// Which series an autocorrelation curve was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcfSeries {
    Squared,
    Returns,
}

impl AcfSeries {
    pub fn name(self) -> &'static str {
        match self {
            AcfSeries::Squared => "squared",
            AcfSeries::Returns => "returns",
        }
    }
}

/// Plot-ready `lag,value` CSV with a commented header.
pub fn write_acf<F: Real>(curve: &AcfCurve<F>, series: AcfSeries) -> String {
    let mut out = header("acf");
    out += &format!("# series={}\n# sample_size={}\nlag,value\n", series.name(), curve.sample_size);
    for (k, v) in curve.values.iter().enumerate() {
        out += &format!("{},{v}\n", k + 1);
    }
    out
}

pub fn read_acf<F: Real>(text: &str) -> Result<(AcfCurve<F>, AcfSeries)> {
    let mut r = Reader::new(text, "acf")?;
    let series = match r.field("# series")? {
        "squared" => AcfSeries::Squared,
        "returns" => AcfSeries::Returns,
        other => return Err(Error::Format(format!("unknown acf series `{other}`"))),
    };
    let sample_size: usize = r.parsed("# sample_size")?;
    let (n, columns) = r.next_line()?;
    if columns != "lag,value" {
        return Err(r.err(n, "expected the `lag,value` column header"));
    }
    let mut values = Vec::new();
    for (k, line) in r.lines.by_ref() {
        if line.is_empty() {
            continue;
        }
        let (lag, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Format(format!("acf artifact, line {}: bad row", k + 1)))?;
        if num::<usize>(lag)? != values.len() + 1 {
            return Err(Error::Format("acf lags are not consecutive".into()));
        }
        values.push(num(v)?);
    }
    Ok((AcfCurve { values, sample_size }, series))
}

/// `param,mse,seed,replications,error` CSV; failed points have an empty
/// `mse` and a quoted error message.
pub fn write_sweep<F: Real>(result: &SweepResult<F>) -> String {
    let mut out = header("sweep");
    out += &format!("# parameter={}\n", result.parameter);
    out += &format!(
        "# argmin={}\n",
        result.best().map(|p| p.value.to_string()).unwrap_or_default()
    );
    out += "param,mse,seed,replications,error\n";
    for p in &result.points {
        let mse = p.mse.map(|m| m.to_string()).unwrap_or_default();
        let err = p
            .error
            .as_deref()
            .map(|e| format!("\"{}\"", e.replace('"', "'")))
            .unwrap_or_default();
        out += &format!("{},{mse},{},{},{err}\n", p.value, p.seed, p.replications);
    }
    out
}

/// Data and model squared-state autocorrelation side by side.
pub fn write_acf_comparison<F: Real>(data: &AcfCurve<F>, model: &AcfCurve<F>, data_mode: &str, replications: usize) -> Result<String> {
    let mse = crate::diagnostics::mse_acf(data, model)?;
    let mut out = header("acf-comparison");
    out += &format!("# data={data_mode}\n# sample_size={}\n# replications={replications}\n# mse={mse}\n", data.sample_size);
    out += "lag,data,model\n";
    for (k, (d, m)) in data.values.iter().zip(&model.values).enumerate() {
        out += &format!("{},{d},{m}\n", k + 1);
    }
    Ok(out)
}

/// Jump tables of simulated replications with the grid that labels them.
pub fn write_trajectories<F: Real>(trajectories: &[Trajectory<F>], grid: &ReturnGrid<F>) -> Result<String> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Usage("no trajectories to write".into()))?;
    let mut out = header("trajectories");
    out += &format!("generator={GENERATOR_ID}\n");
    out += &format!("seed={}\n", first.seed);
    out += &format!("horizon={}\n", first.horizon);
    out += &format!("kernel={}\n", first.kernel_fingerprint);
    write_grid(&mut out, grid);
    out += &format!("replications={}\n", trajectories.len());
    for tr in trajectories {
        if tr.seed != first.seed || tr.horizon != first.horizon || tr.kernel_fingerprint != first.kernel_fingerprint {
            return Err(Error::Usage("trajectories come from different runs".into()));
        }
        out += &format!("replication={},{}\n", tr.replication, tr.states.len());
        for (t, j) in tr.times.iter().zip(&tr.states) {
            out += &format!("{t},{j}\n");
        }
    }
    Ok(out)
}

pub fn read_trajectories<F: Real>(text: &str) -> Result<(Vec<Trajectory<F>>, ReturnGrid<F>)> {
    let mut r = Reader::new(text, "trajectories")?;
    let generator = r.field("generator")?;
    if generator != GENERATOR_ID {
        return Err(Error::Format(format!("unknown generator `{generator}`")));
    }
    let seed: u64 = r.parsed("seed")?;
    let horizon: u64 = r.parsed("horizon")?;
    let kernel_fingerprint = r.field("kernel")?.to_string();
    let grid = read_grid(&mut r)?;
    let reps: usize = r.parsed("replications")?;
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let head: Vec<&str> = r.field("replication")?.split(',').collect();
        if head.len() != 2 {
            return Err(Error::Format("bad replication header".into()));
        }
        let replication: u64 = num(head[0])?;
        let len: usize = num(head[1])?;
        let mut times = Vec::with_capacity(len);
        let mut states = Vec::with_capacity(len);
        for row in r.rows(len, 2)? {
            times.push(num::<u64>(row[0])?);
            let j: usize = num(row[1])?;
            if j >= grid.num_states() {
                return Err(Error::Format(format!("state {j} out of range")));
            }
            states.push(j);
        }
        if times.first() != Some(&0) || times.windows(2).any(|w| w[0] >= w[1]) || times.last().is_some_and(|&t| t >= horizon) {
            return Err(Error::Format("jump times must start at 0 and increase below the horizon".into()));
        }
        out.push(Trajectory {
            states,
            times,
            horizon,
            seed,
            replication,
            kernel_fingerprint: kernel_fingerprint.clone(),
            index_values: None,
        });
    }
    r.finish()?;
    Ok((out, grid))
}

/// One output of a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generator: String,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Version {
                found: m.format_version.to_string(),
                expected: FORMAT_VERSION.to_string(),
            });
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smc::{estimate_kernel, extract_mrp};

    fn series() -> StateSeries<f64> {
        let grid = ReturnGrid::from_state_values(vec![-0.001, 0.0, 0.001]).unwrap();
        StateSeries::with_days(vec![1, 1, 2, 0, 0, 1, 2, 2, 1, 0], vec![0, 5], grid).unwrap()
    }

    #[test]
    fn state_series_round_trip() {
        let s = series();
        let text = write_state_series(&s);
        let back = read_state_series::<f64>(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(write_state_series(&back), text);
    }

    #[test]
    fn kernel_round_trip() {
        let s = series();
        let sample = extract_mrp(&s, ExtractOptions::default()).unwrap();
        let file = KernelFile {
            kernel: estimate_kernel::<f64>(&sample, None, true).unwrap(),
            extract: ExtractOptions::default(),
            state_values: s.grid.state_values.clone(),
        };
        let text = write_kernel(&file);
        let back = read_kernel::<f64>(&text).unwrap();
        assert_eq!(back.kernel.fingerprint(), file.kernel.fingerprint());
        assert_eq!(write_kernel(&back), text);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let text = write_state_series(&series()).replacen(" v1", " v9", 1);
        assert!(matches!(read_state_series::<f64>(&text), Err(Error::Version { .. })));
        assert!(matches!(read_kernel::<f64>(&text), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_artifact_is_rejected() {
        let text = write_state_series(&series());
        let cut = &text[..text.len() - 4];
        assert!(read_state_series::<f64>(cut).is_err());
    }
}
