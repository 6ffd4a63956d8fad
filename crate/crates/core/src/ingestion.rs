//! Edge-stream loading and node-level degree features.
//!
//! Edge lists are plain CSV rows `time,src,dst[,weight]` with an optional
//! header and `#` comments. Raw integer times are bucketed into ticks by a
//! [`TickSpec`]; every bucket between the first and last observed one is kept
//! (empty buckets become empty snapshots) unless the spec's skip rule drops it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One weighted edge inside a snapshot. Endpoints index into
/// [`TemporalGraphSequence::nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub weight: f64,
}

/// Ordered sequence of graph snapshots over a regular tick axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalGraphSequence {
    /// Sorted global node universe.
    pub nodes: Vec<String>,
    /// Bucket index of every retained tick, strictly increasing.
    pub timestamps: Vec<i64>,
    pub snapshots: Vec<Vec<Edge>>,
    pub directed: bool,
}

/// Skip predicate over bucket indices: bucket `b` is dropped when
/// `(b + phase).rem_euclid(period)` is one of `offsets`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRule {
    pub period: i64,
    pub phase: i64,
    pub offsets: Vec<i64>,
}

impl SkipRule {
    /// Daily buckets whose bucket 0 falls on weekday `first_weekday`
    /// (0 = Monday); Saturdays and Sundays are dropped.
    pub fn weekends(first_weekday: i64) -> Self {
        SkipRule {
            period: 7,
            phase: first_weekday,
            offsets: vec![5, 6],
        }
    }

    pub fn skips(&self, bucket: i64) -> bool {
        self.period > 0 && self.offsets.contains(&(bucket + self.phase).rem_euclid(self.period))
    }
}

/// Maps raw integer times to ticks by fixed-width bucketing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickSpec {
    pub width: i64,
    /// Time of bucket 0; defaults to the smallest time in the file.
    #[serde(default)]
    pub origin: Option<i64>,
    #[serde(default)]
    pub skip: Option<SkipRule>,
}

impl Default for TickSpec {
    fn default() -> Self {
        TickSpec {
            width: 1,
            origin: None,
            skip: None,
        }
    }
}

impl TickSpec {
    pub fn with_width(width: i64) -> Self {
        TickSpec {
            width,
            ..Default::default()
        }
    }
}

impl TemporalGraphSequence {
    /// Builds a sequence from per-tick edge lists given by node name.
    /// Undirected edges are canonicalized so that `src <= dst`.
    pub fn from_named_edges(
        snapshots: &[Vec<(String, String, f64)>],
        directed: bool,
    ) -> Result<Self> {
        let universe: BTreeSet<&str> = snapshots
            .iter()
            .flatten()
            .flat_map(|(s, d, _)| [s.as_str(), d.as_str()])
            .collect();
        let nodes: Vec<String> = universe.into_iter().map(str::to_owned).collect();
        let index: BTreeMap<&str, u32> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i as u32))
            .collect();
        let snaps = snapshots
            .iter()
            .map(|edges| {
                edges
                    .iter()
                    .map(|(s, d, w)| make_edge(index[s.as_str()], index[d.as_str()], *w, directed))
                    .collect()
            })
            .collect();
        let seq = TemporalGraphSequence {
            nodes,
            timestamps: (0..snapshots.len() as i64).collect(),
            snapshots: snaps,
            directed,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn num_ticks(&self) -> usize {
        self.snapshots.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.snapshots.len() < 2 {
            return Err(Error::validation(format!(
                "a temporal graph needs at least 2 ticks, got {}",
                self.snapshots.len()
            )));
        }
        if self.timestamps.len() != self.snapshots.len() {
            return Err(Error::validation("timestamp count differs from snapshot count"));
        }
        if self.timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("timestamps must be strictly increasing"));
        }
        let n = self.nodes.len() as u32;
        for e in self.snapshots.iter().flatten() {
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::validation(format!("invalid edge weight {}", e.weight)));
            }
            if e.src >= n || e.dst >= n {
                return Err(Error::validation("edge endpoint outside the node universe"));
            }
            if !self.directed && e.src > e.dst {
                return Err(Error::validation("undirected edge not stored with src <= dst"));
            }
        }
        Ok(())
    }

    /// Writes the sequence back out as a `time,src,dst,weight` edge list
    /// using bucket indices as times.
    pub fn write_edge_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "src", "dst", "weight"])?;
        for (t, snap) in self.timestamps.iter().zip(&self.snapshots) {
            for e in snap {
                w.write_record([
                    t.to_string(),
                    self.nodes[e.src as usize].clone(),
                    self.nodes[e.dst as usize].clone(),
                    e.weight.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("edge csv", e))?;
        Ok(())
    }
}

fn make_edge(a: u32, b: u32, weight: f64, directed: bool) -> Edge {
    if directed || a <= b {
        Edge { src: a, dst: b, weight }
    } else {
        Edge { src: b, dst: a, weight }
    }
}

/// Loads an edge-list file; see [`parse_edge_stream`].
pub fn load_edge_stream(
    path: impl AsRef<Path>,
    directed: bool,
    tick_spec: &TickSpec,
) -> Result<TemporalGraphSequence> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_edge_stream(file, directed, tick_spec)
}

pub fn parse_edge_stream<R: Read>(
    reader: R,
    directed: bool,
    tick_spec: &TickSpec,
) -> Result<TemporalGraphSequence> {
    if tick_spec.width <= 0 {
        return Err(Error::config("tick width must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut rows: Vec<(i64, String, String, f64)> = Vec::new();
    let mut first = true;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let is_header = first && record.get(0).map_or(false, |f| f.parse::<i64>().is_err());
        first = false;
        if is_header {
            continue;
        }
        if record.len() < 3 || record.len() > 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 or 4 fields, found {}", record.len()),
            });
        }
        let time = record[0].parse::<i64>().map_err(|_| Error::Parse {
            line,
            message: format!("invalid time `{}`", &record[0]),
        })?;
        let weight = match record.get(3) {
            None | Some("") => 1.0,
            Some(w) => w.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid weight `{w}`"),
            })?,
        };
        if !weight.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite weight `{}`", &record[3]),
            });
        }
        if weight < 0.0 {
            return Err(Error::validation(format!("negative weight {weight} at line {line}")));
        }
        if record[1].is_empty() || record[2].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty node id".into(),
            });
        }
        rows.push((time, record[1].to_owned(), record[2].to_owned(), weight));
    }

    let Some(min_time) = rows.iter().map(|r| r.0).min() else {
        return Err(Error::validation("edge stream is empty; at least 2 ticks are required"));
    };
    let origin = tick_spec.origin.unwrap_or(min_time);
    let bucket_of = |t: i64| (t - origin).div_euclid(tick_spec.width);
    let skipped = |b: i64| tick_spec.skip.as_ref().map_or(false, |s| s.skips(b));

    let first_bucket = rows.iter().map(|r| bucket_of(r.0)).min().unwrap_or(0);
    let last_bucket = rows.iter().map(|r| bucket_of(r.0)).max().unwrap_or(0);
    let timestamps: Vec<i64> = (first_bucket..=last_bucket).filter(|&b| !skipped(b)).collect();
    let tick_of: BTreeMap<i64, usize> = timestamps.iter().enumerate().map(|(i, &b)| (b, i)).collect();

    let mut named: Vec<Vec<(String, String, f64)>> = vec![Vec::new(); timestamps.len()];
    for (time, src, dst, w) in rows {
        if let Some(&tick) = tick_of.get(&bucket_of(time)) {
            named[tick].push((src, dst, w));
        }
    }
    if timestamps.len() < 2 {
        return Err(Error::validation(format!(
            "edge stream spans {} tick(s); at least 2 are required",
            timestamps.len()
        )));
    }
    let mut seq = TemporalGraphSequence::from_named_edges(&named, directed)?;
    seq.timestamps = timestamps;
    Ok(seq)
}

/// Node-level degree feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    WeightedInDegree,
    WeightedOutDegree,
    UnweightedInDegree,
    UnweightedOutDegree,
    WeightedDegree,
    UnweightedDegree,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::WeightedInDegree,
        FeatureKind::WeightedOutDegree,
        FeatureKind::UnweightedInDegree,
        FeatureKind::UnweightedOutDegree,
        FeatureKind::WeightedDegree,
        FeatureKind::UnweightedDegree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::WeightedInDegree => "weighted-in-degree",
            FeatureKind::WeightedOutDegree => "weighted-out-degree",
            FeatureKind::UnweightedInDegree => "unweighted-in-degree",
            FeatureKind::UnweightedOutDegree => "unweighted-out-degree",
            FeatureKind::WeightedDegree => "weighted-degree",
            FeatureKind::UnweightedDegree => "unweighted-degree",
        }
    }

    /// Short tag used in detector ids, e.g. `win` for weighted in-degree.
    pub fn short(self) -> &'static str {
        match self {
            FeatureKind::WeightedInDegree => "win",
            FeatureKind::WeightedOutDegree => "wout",
            FeatureKind::UnweightedInDegree => "uwin",
            FeatureKind::UnweightedOutDegree => "uwout",
            FeatureKind::WeightedDegree => "wdeg",
            FeatureKind::UnweightedDegree => "uwdeg",
        }
    }

    pub fn is_weighted(self) -> bool {
        matches!(
            self,
            FeatureKind::WeightedInDegree | FeatureKind::WeightedOutDegree | FeatureKind::WeightedDegree
        )
    }

    pub fn is_directional(self) -> bool {
        !matches!(self, FeatureKind::WeightedDegree | FeatureKind::UnweightedDegree)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.short() == s)
            .ok_or_else(|| Error::config(format!("unknown feature `{s}`")))
    }
}

/// n-nodes x T-ticks nonnegative feature grid, stored row-major (one row per node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub node_ids: Vec<String>,
    pub feature: FeatureKind,
    pub ticks: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(node_ids: Vec<String>, feature: FeatureKind, ticks: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != node_ids.len() * ticks {
            return Err(Error::validation(format!(
                "feature matrix has {} values, expected {} x {}",
                values.len(),
                node_ids.len(),
                ticks
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::validation("feature values must be finite and nonnegative"));
        }
        Ok(FeatureMatrix {
            node_ids,
            feature,
            ticks,
            values,
        })
    }

    /// Builds a matrix from per-node rows, naming nodes `0..n`.
    pub fn from_rows(feature: FeatureKind, rows: &[Vec<f64>]) -> Result<Self> {
        let ticks = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ticks) {
            return Err(Error::validation("ragged feature rows"));
        }
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, feature, ticks, rows.concat())
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn num_ticks(&self) -> usize {
        self.ticks
    }

    pub fn row(&self, node: usize) -> &[f64] {
        &self.values[node * self.ticks..(node + 1) * self.ticks]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.ticks.max(1)).take(self.node_ids.len())
    }

    pub fn get(&self, node: usize, tick: usize) -> f64 {
        self.values[node * self.ticks + tick]
    }

    pub fn column(&self, tick: usize) -> Vec<f64> {
        (0..self.num_nodes()).map(|i| self.get(i, tick)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_integer_valued(&self) -> bool {
        self.values.iter().all(|v| v.fract() == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.node_ids.clone(),
            self.feature,
            self.ticks,
            self.values.iter().map(|v| v * c).collect(),
        )
    }

    /// Returns the matrix with rows reordered so that new row `i` is old row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &p in perm {
            values.extend_from_slice(self.row(p));
        }
        FeatureMatrix {
            node_ids: perm.iter().map(|&p| self.node_ids[p].clone()).collect(),
            feature: self.feature,
            ticks: self.ticks,
            values,
        }
    }

    /// CSV with a `node` column followed by one column per tick label.
    pub fn write_csv<W: Write>(&self, out: W, tick_labels: &[i64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(tick_labels.iter().map(i64::to_string));
        w.write_record(&header)?;
        for (id, row) in self.node_ids.iter().zip(self.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("feature csv", e))?;
        Ok(())
    }
}

pub fn extract_features(g: &TemporalGraphSequence, feature: FeatureKind) -> Result<FeatureMatrix> {
    if feature.is_directional() && !g.directed {
        return Err(Error::config(format!(
            "feature `{feature}` needs a directed graph"
        )));
    }
    let n = g.num_nodes();
    let t_len = g.num_ticks();
    let mut values = vec![0.0; n * t_len];
    let amount = |w: f64| if feature.is_weighted() { w } else { 1.0 };
    for (t, snap) in g.snapshots.iter().enumerate() {
        for e in snap {
            let (s, d) = (e.src as usize, e.dst as usize);
            let a = amount(e.weight);
            match feature {
                FeatureKind::WeightedOutDegree | FeatureKind::UnweightedOutDegree => {
                    values[s * t_len + t] += a;
                }
                FeatureKind::WeightedInDegree | FeatureKind::UnweightedInDegree => {
                    values[d * t_len + t] += a;
                }
                FeatureKind::WeightedDegree | FeatureKind::UnweightedDegree => {
                    values[s * t_len + t] += a;
                    if d != s {
                        values[d * t_len + t] += a;
                    }
                }
            }
        }
    }
    FeatureMatrix::new(g.nodes.clone(), feature, t_len, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, directed: bool, width: i64) -> Result<TemporalGraphSequence> {
        parse_edge_stream(text.as_bytes(), directed, &TickSpec::with_width(width))
    }

    #[test]
    fn buckets_rows_into_ticks() {
        let g = parse("0,a,b\n0,b,c\n1,a,c\n", true, 1).unwrap();
        assert_eq!(g.num_ticks(), 2);
        let sizes: Vec<_> = g.snapshots.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 1]);
        assert!(g.snapshots.iter().flatten().all(|e| e.weight == 1.0));
    }

    #[test]
    fn empty_file_is_rejected() {
        assert!(matches!(parse("", true, 1), Err(Error::Validation(_))));
        assert!(matches!(parse("# only a comment\n", true, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_buckets_are_retained() {
        let g = parse("0,a,b\n2,a,b\n", true, 1).unwrap();
        assert_eq!(g.num_ticks(), 3);
        assert!(g.snapshots[1].is_empty());
        assert_eq!(g.timestamps, vec![0, 1, 2]);
    }

    #[test]
    fn single_tick_is_rejected() {
        assert!(matches!(parse("5,a,b\n5,b,c\n", true, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn header_comments_and_weights() {
        let text = "time,src,dst,weight\n# comment\n0,a,b,2.5\n10,b,a\n";
        let g = parse(text, true, 10).unwrap();
        assert_eq!(g.num_ticks(), 2);
        assert_eq!(g.snapshots[0][0].weight, 2.5);
        assert_eq!(g.snapshots[1][0].weight, 1.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse("0,a,b\n1,a\n", true, 1).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("0,a,b\nx1,a,b\n", true, 1).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn negative_weight_is_validation_error() {
        assert!(matches!(parse("0,a,b,-1\n1,a,b\n", true, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn undirected_edges_are_canonical() {
        let g = parse("0,b,a\n1,c,a\n", false, 1).unwrap();
        for e in g.snapshots.iter().flatten() {
            assert!(e.src <= e.dst);
        }
    }

    #[test]
    fn weekend_skip_drops_buckets() {
        // bucket 0 is a Monday; 7 consecutive days keep 5 ticks.
        let text: String = (0..7).map(|d| format!("{d},a,b\n")).collect();
        let spec = TickSpec {
            width: 1,
            origin: Some(0),
            skip: Some(SkipRule::weekends(0)),
        };
        let g = parse_edge_stream(text.as_bytes(), true, &spec).unwrap();
        assert_eq!(g.timestamps, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_edge_degree_features() {
        let g = parse("0,a,b,2.5\n1,a,a,0\n", true, 1).unwrap();
        let out = extract_features(&g, FeatureKind::WeightedOutDegree).unwrap();
        assert_eq!(out.row(0), &[2.5, 0.0]);
        assert_eq!(out.row(1), &[0.0, 0.0]);
        let inn = extract_features(&g, FeatureKind::UnweightedInDegree).unwrap();
        assert_eq!(inn.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn parallel_edges_accumulate() {
        let g = parse("0,a,b,1\n0,a,b,1\n1,b,a,1\n", true, 1).unwrap();
        let out = extract_features(&g, FeatureKind::WeightedOutDegree).unwrap();
        assert_eq!(out.get(0, 0), 2.0);
        let deg = extract_features(&g, FeatureKind::UnweightedDegree).unwrap();
        assert_eq!(deg.row(0), &[2.0, 1.0]);
    }

    #[test]
    fn direction_mismatch_is_config_error() {
        let g = parse("0,a,b\n1,a,b\n", false, 1).unwrap();
        assert!(matches!(
            extract_features(&g, FeatureKind::WeightedInDegree),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_csv_layout() {
        let g = parse("0,a,b,3\n1,a,b,1\n", false, 1).unwrap();
        let f = extract_features(&g, FeatureKind::WeightedDegree).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, &g.timestamps).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "node,0,1\na,3,1\nb,3,1\n");
    }
}
