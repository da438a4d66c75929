//! Dataset model: gold-standard (GS) and preference-based (PB) samples, the
//! combined treatment-indexed view, JSONL ingestion and the three-way split.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// A query, represented by its precomputed embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out_p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out_a: Option<u64>,
}

impl Query {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>) -> Self {
        Query {
            id: id.into(),
            embedding,
            tokens_in: None,
            tokens_out_p: None,
            tokens_out_a: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }
}

/// Query with its gold-standard quality gain `r` of the premium model over
/// the alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsSample {
    pub query: Query,
    pub r: f64,
}

/// Query with its preference-based quality gain `y`. Discrete pairwise
/// judges produce `y` in {-1, 0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbSample {
    pub query: Query,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gs,
    Pb,
}

/// Where a combined sample came from: source dataset and index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Origin {
    pub source: Source,
    pub index: usize,
}

/// One `(s, t, o)` unit of the combined dataset. `treated` is the evaluation
/// mechanism indicator: true for a GS evaluation, false for PB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedSample {
    pub s: Query,
    pub treated: bool,
    pub o: f64,
    pub origin: Origin,
}

impl CombinedSample {
    /// Treatment indicator as a number.
    pub fn t(&self) -> f64 {
        if self.treated {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub n_test: usize,
    pub n_gs_train: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Output of [`split_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub test: Vec<GsSample>,
    pub train_gs: Vec<GsSample>,
    pub train_pb: Vec<PbSample>,
    /// GS outcome for each `train_pb` query where one is known. Only the
    /// oracle baseline reads these.
    pub pb_gold: Vec<Option<f64>>,
    pub indices: SplitIndices,
}

/// Positions in the GS pool assigned to each part. `train_pb` lists only
/// pool queries; PB-only records are appended after them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub test: Vec<usize>,
    pub train_gs: Vec<usize>,
    pub train_pb: Vec<usize>,
}

/// Which record sources a dataset file may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Gs,
    Pb,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Gs,
    Pb,
    Both,
}

/// One JSONL line. For `"both"`, `outcome` is the GS value and `pb_outcome`
/// the PB value. `truth` carries generator ground truth and is ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub embedding: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pb_outcome: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_in: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out_p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens_out_a: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<serde_json::Value>,
}

impl DatasetRecord {
    pub fn query(&self) -> Query {
        Query {
            id: self.id.clone(),
            embedding: self.embedding.clone(),
            tokens_in: self.tokens_in,
            tokens_out_p: self.tokens_out_p,
            tokens_out_a: self.tokens_out_a,
        }
    }

    pub fn from_query(q: &Query) -> Self {
        DatasetRecord {
            id: q.id.clone(),
            embedding: q.embedding.clone(),
            source: None,
            outcome: None,
            pb_outcome: None,
            tokens_in: q.tokens_in,
            tokens_out_p: q.tokens_out_p,
            tokens_out_a: q.tokens_out_a,
            truth: None,
        }
    }
}

/// A parsed dataset record with whichever outcomes it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolRecord {
    pub query: Query,
    pub gold: Option<f64>,
    pub preference: Option<f64>,
}

/// Read raw JSONL records. Blank lines are skipped. Validates JSON shape,
/// finiteness and a uniform embedding dimension; line numbers are 1-based.
pub fn read_records(path: &Path) -> Result<Vec<(usize, DatasetRecord)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        match dim {
            None => dim = Some(rec.embedding.len()),
            Some(d) if d != rec.embedding.len() => {
                return Err(parse_err(format!(
                    "embedding dimension mismatch: expected {d}, got {}",
                    rec.embedding.len()
                )))
            }
            Some(_) => {}
        }
        if rec.embedding.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite embedding coordinate".into()));
        }
        for v in [rec.outcome, rec.pb_outcome].into_iter().flatten() {
            if !v.is_finite() {
                return Err(parse_err("non-finite outcome".into()));
            }
        }
        out.push((line_no, rec));
    }
    Ok(out)
}

/// Load records carrying outcomes; every record needs `source` and the
/// outcome fields that source implies.
pub fn load_pool(path: &Path) -> Result<Vec<PoolRecord>> {
    read_records(path)?
        .into_iter()
        .map(|(line, rec)| {
            let err = |message: &str| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: message.to_string(),
            };
            let source = rec.source.ok_or_else(|| err("missing `source`"))?;
            let outcome = rec.outcome.ok_or_else(|| err("missing `outcome`"))?;
            let (gold, preference) = match source {
                SourceTag::Gs => (Some(outcome), None),
                SourceTag::Pb => (None, Some(outcome)),
                SourceTag::Both => (
                    Some(outcome),
                    Some(
                        rec.pb_outcome
                            .ok_or_else(|| err("source `both` requires `pb_outcome`"))?,
                    ),
                ),
            };
            Ok(PoolRecord {
                query: rec.query(),
                gold,
                preference,
            })
        })
        .collect()
}

/// Load queries only (outcomes optional and ignored).
pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    Ok(read_records(path)?
        .into_iter()
        .map(|(_, rec)| rec.query())
        .collect())
}

/// Load a dataset file and separate GS and PB samples. Under the `gs`
/// (`pb`) schema, records tagged `pb` (`gs`) are rejected and `both`
/// records contribute only their GS (PB) side; `mixed` accepts everything,
/// and `both` records yield one sample of each kind.
pub fn load_dataset(path: &Path, schema: Schema) -> Result<(Vec<GsSample>, Vec<PbSample>)> {
    let mut gs = Vec::new();
    let mut pb = Vec::new();
    for (line, rec) in read_records(path)? {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let source = rec.source.ok_or_else(|| err("missing `source`".into()))?;
        let outcome = rec.outcome.ok_or_else(|| err("missing `outcome`".into()))?;
        if matches!((schema, source), (Schema::Gs, SourceTag::Pb) | (Schema::Pb, SourceTag::Gs)) {
            return Err(err(format!(
                "record source {source:?} not allowed under {schema:?} schema"
            )));
        }
        let query = rec.query();
        match source {
            SourceTag::Gs => gs.push(GsSample { query, r: outcome }),
            SourceTag::Pb => pb.push(PbSample { query, y: outcome }),
            SourceTag::Both => {
                let pb_outcome = rec
                    .pb_outcome
                    .ok_or_else(|| err("source `both` requires `pb_outcome`".into()))?;
                if schema != Schema::Pb {
                    gs.push(GsSample {
                        query: query.clone(),
                        r: outcome,
                    });
                }
                if schema != Schema::Gs {
                    pb.push(PbSample {
                        query,
                        y: pb_outcome,
                    });
                }
            }
        }
    }
    Ok((gs, pb))
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Common embedding dimension of a set of queries, `None` if empty.
pub fn common_dim<'a>(queries: impl IntoIterator<Item = &'a Query>) -> Result<Option<usize>> {
    let mut dim = None;
    for q in queries {
        match dim {
            None => dim = Some(q.dim()),
            Some(d) if d != q.dim() => return Err(Error::dim(d, q.dim())),
            Some(_) => {}
        }
    }
    Ok(dim)
}

/// Merge GS and PB samples into one treatment-indexed dataset. GS samples
/// come first (`treated = true`, `o = r`), then PB samples (`o = y`).
pub fn make_combined_dataset(gs: &[GsSample], pb: &[PbSample]) -> Result<Vec<CombinedSample>> {
    common_dim(gs.iter().map(|g| &g.query).chain(pb.iter().map(|p| &p.query)))?;
    let gs_part = gs.iter().enumerate().map(|(i, g)| CombinedSample {
        s: g.query.clone(),
        treated: true,
        o: g.r,
        origin: Origin {
            source: Source::Gs,
            index: i,
        },
    });
    let pb_part = pb.iter().enumerate().map(|(i, p)| CombinedSample {
        s: p.query.clone(),
        treated: false,
        o: p.y,
        origin: Origin {
            source: Source::Pb,
            index: i,
        },
    });
    Ok(gs_part.chain(pb_part).collect())
}

/// Invert [`make_combined_dataset`] using origin bookkeeping. Fails unless
/// the origins of each source form a bijection onto `0..len`.
pub fn split_combined(data: &[CombinedSample]) -> Result<(Vec<GsSample>, Vec<PbSample>)> {
    let n_gs = data.iter().filter(|d| d.origin.source == Source::Gs).count();
    let mut gs: Vec<Option<GsSample>> = vec![None; n_gs];
    let mut pb: Vec<Option<PbSample>> = vec![None; data.len() - n_gs];
    for d in data {
        if d.treated != (d.origin.source == Source::Gs) {
            return Err(Error::Degenerate(format!(
                "treatment flag disagrees with origin for `{}`",
                d.s.id
            )));
        }
        let slot_taken = match d.origin.source {
            Source::Gs => gs
                .get_mut(d.origin.index)
                .map(|slot| slot.replace(GsSample { query: d.s.clone(), r: d.o }).is_some()),
            Source::Pb => pb
                .get_mut(d.origin.index)
                .map(|slot| slot.replace(PbSample { query: d.s.clone(), y: d.o }).is_some()),
        };
        if slot_taken != Some(false) {
            return Err(Error::Degenerate(format!(
                "origin indices are not a bijection (at {:?})",
                d.origin
            )));
        }
    }
    Ok((
        gs.into_iter().map(|g| g.expect("bijection checked")).collect(),
        pb.into_iter().map(|p| p.expect("bijection checked")).collect(),
    ))
}

/// Three-way split of a GS-labelled pool: a test set, a GS training set,
/// and a PB training set holding the PB outcomes of every remaining pool
/// query. PB records whose id is not in the GS pool join the PB training
/// set after them, in input order.
pub fn split_dataset(
    gs_pool: &[GsSample],
    pb_pool: &[PbSample],
    spec: &SplitSpec,
) -> Result<SplitDataset> {
    let needed = spec.n_test + spec.n_gs_train;
    if needed > gs_pool.len() {
        return Err(Error::InsufficientSamples {
            needed,
            available: gs_pool.len(),
        });
    }
    common_dim(gs_pool.iter().map(|g| &g.query).chain(pb_pool.iter().map(|p| &p.query)))?;

    let mut pb_by_id: HashMap<&str, usize> = HashMap::with_capacity(pb_pool.len());
    for (i, p) in pb_pool.iter().enumerate() {
        if pb_by_id.insert(p.query.id.as_str(), i).is_some() {
            return Err(Error::Degenerate(format!("duplicate PB id `{}`", p.query.id)));
        }
    }

    let mut order: Vec<usize> = (0..gs_pool.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(spec.seed, seed::stream::SPLIT, 0)));

    let test_idx = order[..spec.n_test].to_vec();
    let gs_idx = order[spec.n_test..needed].to_vec();
    let rest_idx = order[needed..].to_vec();

    let mut train_pb = Vec::with_capacity(rest_idx.len());
    let mut pb_gold = Vec::with_capacity(rest_idx.len());
    let mut used = vec![false; pb_pool.len()];
    for &i in &rest_idx {
        let g = &gs_pool[i];
        let j = *pb_by_id.get(g.query.id.as_str()).ok_or_else(|| {
            Error::MissingOutcome(format!("no PB outcome for remaining query `{}`", g.query.id))
        })?;
        used[j] = true;
        train_pb.push(PbSample {
            query: g.query.clone(),
            y: pb_pool[j].y,
        });
        pb_gold.push(Some(g.r));
    }
    let gs_ids: std::collections::HashSet<&str> =
        gs_pool.iter().map(|g| g.query.id.as_str()).collect();
    for (j, p) in pb_pool.iter().enumerate() {
        if !used[j] && !gs_ids.contains(p.query.id.as_str()) {
            train_pb.push(p.clone());
            pb_gold.push(None);
        }
    }

    Ok(SplitDataset {
        test: test_idx.iter().map(|&i| gs_pool[i].clone()).collect(),
        train_gs: gs_idx.iter().map(|&i| gs_pool[i].clone()).collect(),
        train_pb,
        pb_gold,
        indices: SplitIndices {
            test: test_idx,
            train_gs: gs_idx,
            train_pb: rest_idx,
        },
    })
}
