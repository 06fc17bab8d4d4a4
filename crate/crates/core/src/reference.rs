//! Reference measurements and model-vs-measurement reports.
//!
//! Two CSV schemas are accepted, told apart by their header:
//!
//! ```text
//! framework,network,gpus,nodes,metric,mean_s,std_s
//! framework,network,gpus,nodes,hidden
//! ```
//!
//! Lines starting with `#` are comments. A blank `mean_s` marks a cell that
//! was not measured; it loads as absent and is never treated as zero.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{fmt_secs, Framework, Network, PhaseProfile};

const METRICS_HEADER: [&str; 7] = ["framework", "network", "gpus", "nodes", "metric", "mean_s", "std_s"];
const HIDDEN_HEADER: [&str; 5] = ["framework", "network", "gpus", "nodes", "hidden"];

pub const BUNDLED_PHASES: &str = include_str!("../../../data/reference/phases.csv");
pub const BUNDLED_COMM: &str = include_str!("../../../data/reference/comm.csv");
pub const BUNDLED_HIDDEN: &str = include_str!("../../../data/reference/hidden.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    TIo,
    TH2d,
    TF,
    TB,
    TU,
    TComm,
    TIter,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::TIo,
        Metric::TH2d,
        Metric::TF,
        Metric::TB,
        Metric::TU,
        Metric::TComm,
        Metric::TIter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TIo => "t_io",
            Metric::TH2d => "t_h2d",
            Metric::TF => "t_f",
            Metric::TB => "t_b",
            Metric::TU => "t_u",
            Metric::TComm => "t_comm",
            Metric::TIter => "t_iter",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// Join key across tables: `<framework>/<network>/<gpus>g<nodes>n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScenarioId {
    pub framework: Framework,
    pub network: Network,
    pub gpus: u32,
    pub nodes: u32,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}g{}n", self.framework, self.network, self.gpus, self.nodes)
    }
}

impl FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('/');
        let (Some(fw), Some(net), Some(scale), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(format!("scenario id {s:?} is not <framework>/<network>/<G>g<N>n"));
        };
        let bad = || format!("bad scale {scale:?} in scenario id");
        let (g, n) = scale.strip_suffix('n').and_then(|r| r.split_once('g')).ok_or_else(bad)?;
        Ok(ScenarioId {
            framework: fw.parse()?,
            network: net.parse()?,
            gpus: g.parse().map_err(|_| bad())?,
            nodes: n.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub mean: f64,
    pub std: Option<f64>,
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{} ± {}", self.mean, s),
            None => write!(f, "{}", self.mean),
        }
    }
}

/// All reference cells for one scenario. A metric mapped to `None` was
/// declared in the data but not measured.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRecord {
    pub id: ScenarioId,
    pub metrics: BTreeMap<Metric, Option<Measurement>>,
    pub hidden: Option<bool>,
}

impl ReferenceRecord {
    fn new(id: ScenarioId) -> Self {
        ReferenceRecord {
            id,
            metrics: BTreeMap::new(),
            hidden: None,
        }
    }

    pub fn get(&self, metric: Metric) -> Option<Measurement> {
        self.metrics.get(&metric).copied().flatten()
    }

    /// Measured phase breakdown, when every phase is present.
    pub fn phases(&self) -> Option<PhaseProfile> {
        Some(PhaseProfile::single_gpu(
            self.get(Metric::TIo)?.mean,
            self.get(Metric::TH2d)?.mean,
            self.get(Metric::TF)?.mean,
            self.get(Metric::TB)?.mean,
            self.get(Metric::TU)?.mean,
        ))
    }
}

struct Loader<'a> {
    source: &'a str,
    records: Vec<ReferenceRecord>,
    index: HashMap<ScenarioId, usize>,
}

impl<'a> Loader<'a> {
    fn err(&self, line: u64, column: &str, message: impl Into<String>) -> Error {
        Error::Reference {
            source_name: self.source.to_string(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn record(&mut self, id: ScenarioId) -> &mut ReferenceRecord {
        let next = self.records.len();
        let k = *self.index.entry(id).or_insert(next);
        if k == next {
            self.records.push(ReferenceRecord::new(id));
        }
        &mut self.records[k]
    }

    fn scenario(&self, row: &csv::StringRecord, line: u64) -> Result<ScenarioId> {
        let framework = row[0].parse().map_err(|e: String| self.err(line, "framework", e))?;
        let network = row[1].parse().map_err(|e: String| self.err(line, "network", e))?;
        let count = |k: usize, name: &str| -> Result<u32> {
            match row[k].parse::<u32>() {
                Ok(v) if v >= 1 => Ok(v),
                _ => Err(self.err(line, name, format!("expected a positive count, got {:?}", &row[k]))),
            }
        };
        Ok(ScenarioId {
            framework,
            network,
            gpus: count(2, "gpus")?,
            nodes: count(3, "nodes")?,
        })
    }

    fn seconds(&self, text: &str, line: u64, column: &str) -> Result<Option<f64>> {
        if text.is_empty() {
            return Ok(None);
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
            _ => Err(self.err(line, column, format!("expected non-negative seconds, got {text:?}"))),
        }
    }

    fn metrics_row(&mut self, row: &csv::StringRecord, line: u64) -> Result<()> {
        let id = self.scenario(row, line)?;
        let metric: Metric = row[4].parse().map_err(|e: String| self.err(line, "metric", e))?;
        let mean = self.seconds(&row[5], line, "mean_s")?;
        let std = self.seconds(&row[6], line, "std_s")?;
        if mean.is_none() && std.is_some() {
            return Err(self.err(line, "std_s", "std-dev given for an absent mean"));
        }
        let cell = mean.map(|mean| Measurement { mean, std });
        if self.record(id).metrics.insert(metric, cell).is_some() {
            return Err(self.err(line, "metric", format!("duplicate {metric} cell for {id}")));
        }
        Ok(())
    }

    fn hidden_row(&mut self, row: &csv::StringRecord, line: u64) -> Result<()> {
        let id = self.scenario(row, line)?;
        let hidden = match &row[4] {
            "yes" => true,
            "no" => false,
            other => return Err(self.err(line, "hidden", format!("expected yes or no, got {other:?}"))),
        };
        if self.record(id).hidden.replace(hidden).is_some() {
            return Err(self.err(line, "hidden", format!("duplicate hidden flag for {id}")));
        }
        Ok(())
    }
}

/// Parses either reference schema from CSV text. Empty input yields no
/// records.
pub fn parse_reference(text: &str, source_name: &str) -> Result<Vec<ReferenceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut loader = Loader {
        source: source_name,
        records: Vec::new(),
        index: HashMap::new(),
    };
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(loader.err(e.position().map_or(1, |p| p.line()), "header", e.to_string())),
    };
    if header.is_empty() {
        return Ok(Vec::new());
    }
    let columns: Vec<&str> = header.iter().collect();
    let is_hidden = if columns == METRICS_HEADER {
        false
    } else if columns == HIDDEN_HEADER {
        true
    } else {
        let line = header.position().map_or(1, |p| p.line());
        return Err(loader.err(
            line,
            "header",
            format!(
                "expected `{}` or `{}`",
                METRICS_HEADER.join(","),
                HIDDEN_HEADER.join(",")
            ),
        ));
    };
    let width = columns.len();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            loader.err(line, "-", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(loader.err(
                line,
                header.get(row.len().min(width - 1)).unwrap_or("-"),
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        if is_hidden {
            loader.hidden_row(&row, line)?;
        } else {
            loader.metrics_row(&row, line)?;
        }
    }
    Ok(loader.records)
}

pub fn load_reference(path: impl AsRef<Path>) -> Result<Vec<ReferenceRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reference(&text, &path.display().to_string())
}

/// Combines record lists, keeping first-seen order. A cell defined in more
/// than one list keeps the first definition.
pub fn merge_records(lists: impl IntoIterator<Item = Vec<ReferenceRecord>>) -> Vec<ReferenceRecord> {
    let mut out: Vec<ReferenceRecord> = Vec::new();
    let mut index: HashMap<ScenarioId, usize> = HashMap::new();
    for list in lists {
        for rec in list {
            match index.get(&rec.id) {
                Some(&k) => {
                    let dst = &mut out[k];
                    for (m, cell) in rec.metrics {
                        dst.metrics.entry(m).or_insert(cell);
                    }
                    if dst.hidden.is_none() {
                        dst.hidden = rec.hidden;
                    }
                }
                None => {
                    index.insert(rec.id, out.len());
                    out.push(rec);
                }
            }
        }
    }
    out
}

/// The bundled single-GPU breakdown, aggregation overheads and hidden flags.
pub fn bundled() -> Vec<ReferenceRecord> {
    let parse = |text, name| parse_reference(text, name).expect("bundled reference data parses");
    merge_records([
        parse(BUNDLED_PHASES, "phases.csv"),
        parse(BUNDLED_COMM, "comm.csv"),
        parse(BUNDLED_HIDDEN, "hidden.csv"),
    ])
}

/// Serializes metric cells in the metrics schema.
pub fn write_metrics_csv(records: &[ReferenceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for rec in records {
        for (metric, cell) in &rec.metrics {
            let (mean, std) = match cell {
                Some(m) => (m.mean.to_string(), m.std.map(|s| s.to_string()).unwrap_or_default()),
                None => (String::new(), String::new()),
            };
            let id = rec.id;
            w.write_record([
                id.framework.name(),
                id.network.name(),
                &id.gpus.to_string(),
                &id.nodes.to_string(),
                metric.name(),
                &mean,
                &std,
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Serializes hidden flags in the hidden schema.
pub fn write_hidden_csv(records: &[ReferenceRecord]) -> String {
    let mut out = HIDDEN_HEADER.join(",");
    out.push('\n');
    for rec in records {
        if let Some(h) = rec.hidden {
            let id = rec.id;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                id.framework,
                id.network,
                id.gpus,
                id.nodes,
                if h { "yes" } else { "no" }
            ));
        }
    }
    out
}

/// Cells declared in the data without a measurement.
pub fn missing_cells(records: &[ReferenceRecord]) -> Vec<(ScenarioId, Metric)> {
    records
        .iter()
        .flat_map(|r| {
            r.metrics
                .iter()
                .filter(|(_, c)| c.is_none())
                .map(move |(m, _)| (r.id, *m))
        })
        .collect()
}

/// A model output to compare against a reference cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scenario: ScenarioId,
    pub metric: Metric,
    pub value: f64,
    pub notes: Vec<String>,
}

impl Prediction {
    pub fn new(scenario: ScenarioId, metric: Metric, value: f64) -> Self {
        Prediction {
            scenario,
            metric,
            value,
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub scenario: ScenarioId,
    pub metric: Metric,
    pub predicted: f64,
    /// `None` renders as "no reference".
    pub measured: Option<Measurement>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub notes: Vec<String>,
}

/// Analytic closed form against the simulated schedule for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheck {
    pub scenario: String,
    pub formula: String,
    pub analytic: f64,
    pub simulated: f64,
}

impl CrossCheck {
    pub fn gap(&self) -> f64 {
        self.simulated - self.analytic
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub cross_checks: Vec<CrossCheck>,
    pub missing: Vec<(ScenarioId, Metric)>,
    /// Report-level remarks, such as quantities that could not be predicted.
    pub notes: Vec<String>,
}

impl ValidationReport {
    fn rel_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().filter_map(|r| r.rel_error)
    }

    pub fn mean_rel_error(&self) -> Option<f64> {
        let v: Vec<f64> = self.rel_errors().collect();
        if v.is_empty() {
            return None;
        }
        // sorted summation keeps the aggregate independent of row order
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        Some(sorted.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn max_rel_error(&self) -> Option<f64> {
        self.rel_errors().reduce(f64::max)
    }
}

/// Joins predictions to reference cells. Every scenario must exist in the
/// records; a missing cell yields a "no reference" row outside aggregates.
pub fn validate_model(records: &[ReferenceRecord], predictions: &[Prediction]) -> Result<ValidationReport> {
    let index: HashMap<ScenarioId, &ReferenceRecord> = records.iter().map(|r| (r.id, r)).collect();
    let mut rows = Vec::with_capacity(predictions.len());
    for p in predictions {
        let rec = index
            .get(&p.scenario)
            .ok_or_else(|| Error::UnresolvedScenario(p.scenario.to_string()))?;
        let measured = rec.get(p.metric);
        let mut notes = p.notes.clone();
        let (abs_error, rel_error) = match measured {
            Some(m) => {
                let abs = (p.value - m.mean).abs();
                let rel = if m.mean > 0.0 {
                    Some(abs / m.mean)
                } else {
                    notes.push("zero reference".into());
                    None
                };
                (Some(abs), rel)
            }
            None => {
                notes.push("no reference".into());
                (None, None)
            }
        };
        if p.metric == Metric::TIter {
            if let (Some(phases), Some(m)) = (rec.phases(), measured) {
                let sum = crate::analytic::iter_time_sequential(&phases).total;
                notes.push(format!(
                    "measured phases sum to {} vs t_iter {} (gap {})",
                    fmt_secs(sum),
                    fmt_secs(m.mean),
                    fmt_secs(sum - m.mean)
                ));
            }
        }
        rows.push(ValidationRow {
            scenario: p.scenario,
            metric: p.metric,
            predicted: p.value,
            measured,
            abs_error,
            rel_error,
            notes,
        });
    }
    Ok(ValidationReport {
        rows,
        ..Default::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "framework,network,gpus,nodes,metric,mean_s,std_s\n";

    fn id(s: &str) -> ScenarioId {
        s.parse().unwrap()
    }

    #[test]
    fn parses_a_measured_cell() {
        let recs = parse_reference(&format!("{HEADER}cntk,alexnet,1,1,t_io,0.2233,0.051\n"), "t").unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, id("cntk/alexnet/1g1n"));
        assert_eq!(
            recs[0].get(Metric::TIo),
            Some(Measurement {
                mean: 0.2233,
                std: Some(0.051)
            })
        );
    }

    #[test]
    fn blank_cell_is_absent_not_zero() {
        let recs = parse_reference(&format!("{HEADER}tensorflow,resnet50,16,4,t_comm,,\n"), "t").unwrap();
        assert_eq!(recs[0].metrics.get(&Metric::TComm), Some(&None));
        assert_eq!(recs[0].get(Metric::TComm), None);
        assert_eq!(missing_cells(&recs), vec![(id("tensorflow/resnet50/16g4n"), Metric::TComm)]);
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_reference("", "t").unwrap().is_empty());
        assert!(parse_reference(HEADER, "t").unwrap().is_empty());
    }

    #[test]
    fn malformed_rows_name_line_and_column() {
        let err = parse_reference(&format!("{HEADER}cntk,alexnet,1,1,t_io,fast,\n"), "x.csv").unwrap_err();
        match err {
            Error::Reference { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "mean_s");
            }
            other => panic!("{other}"),
        }
        let err = parse_reference(&format!("{HEADER}caffe,alexnet,1,1,t_io,0.1,\n"), "x.csv").unwrap_err();
        assert!(matches!(err, Error::Reference { ref column, .. } if column == "framework"));
        let err = parse_reference(&format!("{HEADER}cntk,vgg16,1,1,t_io,0.1,\n"), "x.csv").unwrap_err();
        assert!(matches!(err, Error::Reference { ref column, .. } if column == "network"));
        let err = parse_reference(&format!("{HEADER}cntk,alexnet,1,1,t_io\n"), "x.csv").unwrap_err();
        assert!(matches!(err, Error::Reference { line: 2, .. }));
        assert!(parse_reference("a,b,c\n1,2,3\n", "x.csv").is_err());
    }

    #[test]
    fn duplicate_cells_are_rejected() {
        let text = format!("{HEADER}cntk,alexnet,1,1,t_io,0.1,\ncntk,alexnet,1,1,t_io,0.2,\n");
        assert!(parse_reference(&text, "t").is_err());
    }

    #[test]
    fn hidden_schema() {
        let recs = parse_reference("# flags\nframework,network,gpus,nodes,hidden\ncntk,alexnet,2,1,no\n", "h").unwrap();
        assert_eq!(recs[0].hidden, Some(false));
        assert!(parse_reference("framework,network,gpus,nodes,hidden\ncntk,alexnet,2,1,maybe\n", "h").is_err());
    }

    #[test]
    fn bundled_data_is_complete() {
        let recs = bundled();
        // 12 single-GPU records, 12 x 4 multi-GPU records
        assert_eq!(recs.len(), 12 + 48);
        let caffe = recs.iter().find(|r| r.id == id("caffe-mpi/alexnet/1g1n")).unwrap();
        assert_eq!(caffe.get(Metric::TIter).unwrap().mean, 0.5772);
        let phases = caffe.phases().unwrap();
        assert!((phases.t_gpu() - 0.5866).abs() < 1e-12);
        let cntk8 = recs.iter().find(|r| r.id == id("cntk/alexnet/8g2n")).unwrap();
        assert_eq!(cntk8.get(Metric::TComm).unwrap().mean, 0.0906);
        assert_eq!(cntk8.hidden, Some(false));
        let missing = missing_cells(&recs);
        assert_eq!(missing.len(), 6);
        assert!(missing.iter().all(|(s, m)| s.framework == Framework::Tensorflow && *m == Metric::TComm && s.nodes > 1));
    }

    #[test]
    fn scenario_id_round_trip() {
        let s = id("caffe-mpi/resnet50/16g4n");
        assert_eq!(s.to_string(), "caffe-mpi/resnet50/16g4n");
        assert!("cntk/alexnet/4g".parse::<ScenarioId>().is_err());
        assert!("cntk/alexnet".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn caffe_mpi_pipelined_prediction_error() {
        let recs = bundled();
        let report = validate_model(&recs, &[Prediction::new(id("caffe-mpi/alexnet/1g1n"), Metric::TIter, 0.5866)]).unwrap();
        let row = &report.rows[0];
        // (.5866 - .5772) / .5772
        assert!((row.rel_error.unwrap() - 0.0094 / 0.5772).abs() < 1e-12);
        assert!((row.rel_error.unwrap() - 0.0163).abs() < 5e-5);
        assert!(row.notes.iter().any(|n| n.contains("phases sum to 0.5868")));
    }

    #[test]
    fn exact_prediction_and_absent_reference() {
        let recs = bundled();
        let preds = [
            Prediction::new(id("cntk/alexnet/1g1n"), Metric::TIter, 0.7433),
            Prediction::new(id("cntk/alexnet/2g1n"), Metric::TIter, 1.478),
        ];
        let report = validate_model(&recs, &preds).unwrap();
        assert_eq!(report.rows[0].rel_error, Some(0.0));
        assert_eq!(report.rows[1].measured, None);
        assert!(report.rows[1].notes.contains(&"no reference".to_string()));
        assert_eq!(report.max_rel_error(), Some(0.0));
    }

    #[test]
    fn unresolvable_scenario_is_an_error() {
        let preds = [Prediction::new(id("cntk/alexnet/32g8n"), Metric::TIter, 1.0)];
        assert!(matches!(
            validate_model(&bundled(), &preds),
            Err(Error::UnresolvedScenario(_))
        ));
    }

    #[test]
    fn writers_round_trip_bundled_data() {
        let recs = bundled();
        let again = merge_records([
            parse_reference(&write_metrics_csv(&recs), "m").unwrap(),
            parse_reference(&write_hidden_csv(&recs), "h").unwrap(),
        ]);
        assert_eq!(again, recs);
    }
}
