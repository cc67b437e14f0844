//! Power-study harness: calibrate every method once, evaluate all of them on
//! the same seeded test samples for each of the fifteen cases, and report
//! rejection fractions as CSV or markdown.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::classical::{Direction, StatisticName};
use crate::engine::{calibrate_cutoff, train, DntModel, TrainConfig};
use crate::error::{Error, Result};
use crate::features::Extractor;
use crate::similarity::{SimilarityMetric, SimilarityTest};
use crate::stats::{purpose, DistributionSpec, SeedScheme, MIN_SAMPLE, NULL_CASE};

pub const MIN_REPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    DntRaw,
    DntImage,
    Ks,
    Ad,
    Jb,
    Glb,
    Gg,
    Bs,
    Psnr,
    Ssim,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::DntRaw,
        Method::DntImage,
        Method::Ks,
        Method::Ad,
        Method::Jb,
        Method::Glb,
        Method::Gg,
        Method::Bs,
        Method::Psnr,
        Method::Ssim,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::DntRaw => "DNT-raw",
            Method::DntImage => "DNT-image",
            Method::Ks => "KS",
            Method::Ad => "AD",
            Method::Jb => "JB",
            Method::Glb => "GLB",
            Method::Gg => "GG",
            Method::Bs => "BS",
            Method::Psnr => "PSNR",
            Method::Ssim => "SSIM",
        }
    }

    pub fn valid_names() -> String {
        Method::ALL.map(Method::as_str).join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::UnknownMethod {
                name: s.trim().to_string(),
                valid: Method::valid_names(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub reps: usize,
    pub n: usize,
    pub calibration_reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    /// Settings for the DNT methods; `n`, `extractor`, `alpha` and
    /// `master_seed` are overridden from this config.
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            methods: Method::ALL.to_vec(),
            reps: 1_000,
            n: train.n,
            calibration_reps: 20_000,
            alpha: train.alpha,
            master_seed: train.master_seed,
            train,
        }
    }
}

impl RunConfig {
    pub fn train_config(&self, extractor: Extractor) -> TrainConfig {
        TrainConfig {
            n: self.n,
            extractor,
            alpha: self.alpha,
            master_seed: self.master_seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if self.reps < MIN_REPS {
            return Err(Error::Config(format!("reps must be at least {MIN_REPS}, got {}", self.reps)));
        }
        if self.n < MIN_SAMPLE {
            return Err(Error::Config(format!("n must be at least {MIN_SAMPLE}, got {}", self.n)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        for m in &self.methods {
            match m {
                Method::DntRaw => self.train_config(Extractor::RawOrder).validate()?,
                Method::DntImage => self.train_config(Extractor::ImageGrid).validate()?,
                _ if self.calibration_reps < crate::engine::MIN_CALIBRATION_REPS => {
                    return Err(Error::Config(format!(
                        "calibration_reps must be at least {}, got {}",
                        crate::engine::MIN_CALIBRATION_REPS,
                        self.calibration_reps
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Calibrated {
    Classical(StatisticName),
    Similarity(SimilarityTest),
    Dnt(Box<DntModel>),
}

/// A method with its rejection cutoff fixed.
#[derive(Debug, Clone)]
pub struct CalibratedMethod {
    pub method: Method,
    pub cutoff: f64,
    inner: Calibrated,
}

impl CalibratedMethod {
    /// The statistic on the scale the cutoff lives on.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        match &self.inner {
            Calibrated::Classical(name) => Ok(name.compute(x)?.rejection_score()),
            Calibrated::Similarity(test) => test.statistic(x),
            Calibrated::Dnt(model) => model.statistic(x),
        }
    }

    pub fn rejects(&self, x: &[f64]) -> Result<bool> {
        Ok(self.score(x)? > self.cutoff)
    }

    pub fn model(&self) -> Option<&DntModel> {
        match &self.inner {
            Calibrated::Dnt(model) => Some(model),
            _ => None,
        }
    }

    fn wrap(&self, case: Option<u32>) -> impl Fn(Error) -> Error + '_ {
        move |e| Error::Method {
            method: self.method.to_string(),
            case,
            source: Box::new(e),
        }
    }
}

fn classical(method: Method) -> Option<StatisticName> {
    Some(match method {
        Method::Ks => StatisticName::Ks,
        Method::Ad => StatisticName::Ad,
        Method::Jb => StatisticName::Jb,
        Method::Glb => StatisticName::Glb,
        Method::Gg => StatisticName::Gg,
        Method::Bs => StatisticName::Bs,
        _ => return None,
    })
}

/// Trains or calibrates one method. Classical and similarity cutoffs come from
/// `calibration_reps` null samples; DNT cutoffs from the model's own null pool.
pub fn prepare(method: Method, cfg: &RunConfig) -> Result<CalibratedMethod> {
    let wrap = |e| Error::Method {
        method: method.to_string(),
        case: None,
        source: Box::new(e),
    };
    let calibrate = |f: &(dyn Fn(&[f64]) -> Result<f64> + Sync), direction| {
        calibrate_cutoff(f, cfg.n, cfg.calibration_reps, cfg.alpha, cfg.master_seed, direction)
    };
    let (inner, cutoff) = match method {
        Method::DntRaw | Method::DntImage => {
            let extractor = if method == Method::DntRaw {
                Extractor::RawOrder
            } else {
                Extractor::ImageGrid
            };
            let model = train(&cfg.train_config(extractor)).map_err(wrap)?;
            let cutoff = model.cutoff;
            (Calibrated::Dnt(Box::new(model)), cutoff)
        }
        Method::Psnr | Method::Ssim => {
            let metric = if method == Method::Psnr {
                SimilarityMetric::Psnr
            } else {
                SimilarityMetric::Ssim
            };
            let test = SimilarityTest::new(metric, cfg.n).map_err(wrap)?;
            let cutoff = calibrate(&|x| test.statistic(x), Direction::Upper).map_err(wrap)?;
            (Calibrated::Similarity(test), cutoff)
        }
        _ => {
            let name = classical(method).expect("remaining methods are classical");
            let cutoff = calibrate(&|x| Ok(name.compute(x)?.value), name.direction()).map_err(wrap)?;
            (Calibrated::Classical(name), cutoff)
        }
    };
    Ok(CalibratedMethod { method, cutoff, inner })
}

/// Rejection counts of each method on `reps` paired test samples from `spec`.
pub fn evaluate_case(
    methods: &[CalibratedMethod],
    spec: &DistributionSpec,
    n: usize,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<usize>> {
    let seeds = SeedScheme::new(master_seed);
    let decisions = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let x = seeds.sample(spec, n, r, purpose::TEST)?;
            methods
                .iter()
                .map(|m| m.rejects(x.as_ref()).map_err(m.wrap(Some(spec.case_id))))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<Vec<bool>>>>()?;
    let mut counts = vec![0; methods.len()];
    for row in &decisions {
        for (c, &rejected) in counts.iter_mut().zip(row) {
            *c += usize::from(rejected);
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyMeta {
    pub reps: usize,
    pub n: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub case_id: u32,
    pub label: String,
    pub fractions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub methods: Vec<String>,
    pub rows: Vec<PowerRow>,
    /// Per-method mean over the alternative cases (the null case is excluded).
    pub mean_row: Vec<f64>,
    /// Present for tables produced by a run, absent for parsed ones.
    pub meta: Option<StudyMeta>,
}

impl PowerTable {
    pub fn from_counts(methods: &[CalibratedMethod], counts: &[(DistributionSpec, Vec<usize>)], meta: StudyMeta) -> Self {
        let rows: Vec<PowerRow> = counts
            .iter()
            .map(|(spec, c)| PowerRow {
                case_id: spec.case_id,
                label: spec.label(),
                fractions: c.iter().map(|&k| k as f64 / meta.reps as f64).collect(),
            })
            .collect();
        let alternatives: Vec<&PowerRow> = rows.iter().filter(|r| r.case_id != NULL_CASE).collect();
        let mean_row = (0..methods.len())
            .map(|j| alternatives.iter().map(|r| r.fractions[j]).sum::<f64>() / alternatives.len().max(1) as f64)
            .collect();
        Self {
            methods: methods.iter().map(|m| m.method.to_string()).collect(),
            rows,
            mean_row,
            meta: Some(meta),
        }
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m.eq_ignore_ascii_case(name))
    }

    pub fn fraction(&self, case_id: u32, method: &str) -> Option<f64> {
        let j = self.method_index(method)?;
        self.rows.iter().find(|r| r.case_id == case_id).map(|r| r.fractions[j])
    }

    pub fn mean(&self, method: &str) -> Option<f64> {
        self.method_index(method).map(|j| self.mean_row[j])
    }
}

pub fn prepare_all(cfg: &RunConfig) -> Result<Vec<CalibratedMethod>> {
    cfg.validate()?;
    cfg.methods.iter().map(|&m| prepare(m, cfg)).collect()
}

/// Evaluates already prepared methods on the given cases.
pub fn run_cases(methods: &[CalibratedMethod], cases: &[u32], cfg: &RunConfig) -> Result<PowerTable> {
    let counts = cases
        .iter()
        .map(|&c| {
            let spec = DistributionSpec::case(c)?;
            Ok((spec, evaluate_case(methods, &spec, cfg.n, cfg.reps, cfg.master_seed)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerTable::from_counts(
        methods,
        &counts,
        StudyMeta {
            reps: cfg.reps,
            n: cfg.n,
            master_seed: cfg.master_seed,
        },
    ))
}

pub fn run_power_study(cfg: &RunConfig) -> Result<PowerTable> {
    let methods = prepare_all(cfg)?;
    let cases: Vec<u32> = (1..=NULL_CASE).collect();
    run_cases(&methods, &cases, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(Error::Config(format!("unknown table format `{s}` (expected csv or markdown)"))),
        }
    }
}

/// Rounds the shortest decimal representation of `v` to `places` digits,
/// resolving exact ties to the even digit.
pub fn round_half_even(v: f64, places: usize) -> String {
    let text = format!("{}", v.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((&text, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes().chain(std::iter::repeat(b'0')).take(places)).collect();
    let rest = frac_part.as_bytes().get(places..).unwrap_or(&[]);
    let round_up = match rest.first() {
        Some(&d) if d > b'5' => true,
        Some(&b'5') => rest[1..].iter().any(|&d| d != b'0') || (digits.last().unwrap() - b'0') % 2 == 1,
        _ => false,
    };
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - places;
    let int_digits = std::str::from_utf8(&digits[..split]).expect("ascii digits");
    let frac_digits = std::str::from_utf8(&digits[split..]).expect("ascii digits");
    let negative = v.is_sign_negative() && digits.iter().any(|&d| d != b'0');
    let sign = if negative { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int_digits}")
    } else {
        format!("{sign}{int_digits}.{frac_digits}")
    }
}

fn fraction_cell(v: f64) -> String {
    round_half_even(v, 3)
}

pub fn emit_table(t: &PowerTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(t),
        TableFormat::Markdown => emit_markdown(t),
    }
}

fn emit_csv(t: &PowerTable) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let write = |w: &mut csv::Writer<Vec<u8>>, record: Vec<String>| {
        w.write_record(&record).expect("writing to memory cannot fail");
    };
    let mut header = vec!["case".to_string(), "label".to_string()];
    header.extend(t.methods.iter().cloned());
    write(&mut w, header);
    for row in &t.rows {
        let mut record = vec![row.case_id.to_string(), row.label.clone()];
        record.extend(row.fractions.iter().map(|&v| fraction_cell(v)));
        write(&mut w, record);
    }
    let mut mean = vec!["mean".to_string(), String::new()];
    mean.extend(t.mean_row.iter().map(|&v| fraction_cell(v)));
    write(&mut w, mean);
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("CSV output is UTF-8")
}

fn emit_markdown(t: &PowerTable) -> String {
    let mut out = String::new();
    if let Some(meta) = t.meta {
        out.push_str(&format!(
            "Rejection rates at n = {}, {} replicates per case, seed {}.\n\n",
            meta.n, meta.reps, meta.master_seed
        ));
    }
    out.push_str("| Case | Distribution |");
    for m in &t.methods {
        out.push_str(&format!(" {m} |"));
    }
    out.push_str("\n|---:|:---|");
    out.push_str(&"---:|".repeat(t.methods.len()));
    out.push('\n');
    for row in &t.rows {
        out.push_str(&format!("| {} | {} |", row.case_id, row.label));
        for &v in &row.fractions {
            out.push_str(&format!(" {} |", fraction_cell(v)));
        }
        out.push('\n');
    }
    out.push_str("| Mean | |");
    for &v in &t.mean_row {
        out.push_str(&format!(" {} |", fraction_cell(v)));
    }
    out.push('\n');
    out
}

/// Reads a table written by [`emit_table`] in CSV form.
pub fn parse_csv(text: &str) -> Result<PowerTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    let Some((header, body)) = records.split_first() else {
        return Err(Error::Data {
            line: 1,
            message: "empty table".into(),
        });
    };
    if header.len() < 3 || &header[0] != "case" || &header[1] != "label" {
        return Err(Error::Data {
            line: 1,
            message: "header must start with `case,label` and name at least one method".into(),
        });
    }
    let methods: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let parse_fractions = |rec: &csv::StringRecord, line: usize| -> Result<Vec<f64>> {
        if rec.len() != methods.len() + 2 {
            return Err(Error::Data {
                line,
                message: format!("expected {} fields, found {}", methods.len() + 2, rec.len()),
            });
        }
        rec.iter()
            .skip(2)
            .map(|cell| {
                cell.parse::<f64>().map_err(|e| Error::Data {
                    line,
                    message: format!("`{cell}`: {e}"),
                })
            })
            .collect()
    };
    let Some((mean, rows)) = body.split_last() else {
        return Err(Error::Data {
            line: 2,
            message: "missing mean row".into(),
        });
    };
    let mean_line = records.len();
    if &mean[0] != "mean" {
        return Err(Error::Data {
            line: mean_line,
            message: "last row must be the mean row".into(),
        });
    }
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let fractions = parse_fractions(rec, line)?;
            let case_id = rec[0].parse::<u32>().map_err(|e| Error::Data {
                line,
                message: format!("case `{}`: {e}", &rec[0]),
            })?;
            Ok(PowerRow {
                case_id,
                label: rec[1].to_string(),
                fractions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_row = parse_fractions(mean, mean_line)?;
    Ok(PowerTable {
        methods,
        mean_row,
        rows,
        meta: None,
    })
}
