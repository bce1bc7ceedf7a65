//! Hamming-ranking retrieval metrics.
//!
//! Relevance is label equality between query and database item. Ranking
//! ties are broken by ascending database index, so every metric here is a
//! deterministic function of its inputs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{hamming_words, BinaryCode, BinaryCodeSet};
use crate::error::{Error, Result};

/// Database indices by ascending Hamming distance, ties by index.
pub fn rank(query: &BinaryCode, database: &BinaryCodeSet) -> Result<Vec<usize>> {
    if query.len() != database.bits() {
        return Err(Error::dim("query code length", database.bits(), query.len()));
    }
    Ok(rank_words(query.words(), database))
}

/// Counting sort over the `bits + 1` possible distances.
fn rank_words(query: &[u64], database: &BinaryCodeSet) -> Vec<usize> {
    let n = database.len();
    let dists: Vec<u32> = (0..n)
        .map(|i| hamming_words(query, database.code_words(i)))
        .collect();
    let mut starts = vec![0usize; database.bits() + 2];
    for &d in &dists {
        starts[d as usize + 1] += 1;
    }
    for k in 1..starts.len() {
        starts[k] += starts[k - 1];
    }
    let mut order = vec![0usize; n];
    for (i, &d) in dists.iter().enumerate() {
        let slot = &mut starts[d as usize];
        order[*slot] = i;
        *slot += 1;
    }
    order
}

fn check_lengths(ranking: &[usize], relevance: &[bool]) -> Result<()> {
    if ranking.len() != relevance.len() {
        return Err(Error::dim("ranking vs relevance", relevance.len(), ranking.len()));
    }
    Ok(())
}

/// Non-interpolated average precision of a ranking.
///
/// With a cutoff `K` only the top `K` positions count and the sum is
/// divided by `min(relevant, K)`; a database without relevant items then
/// scores 0. Without a cutoff, zero relevant items is an error.
pub fn average_precision(ranking: &[usize], relevance: &[bool], cutoff: Option<usize>) -> Result<f64> {
    check_lengths(ranking, relevance)?;
    let total = relevance.iter().filter(|&&r| r).count();
    let denom = match cutoff {
        None if total == 0 => return Err(Error::UndefinedAp),
        None => total,
        Some(k) => total.min(k),
    };
    if denom == 0 {
        return Ok(0.0);
    }
    let depth = cutoff.unwrap_or(ranking.len()).min(ranking.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &idx) in ranking[..depth].iter().enumerate() {
        if relevance[idx] {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
            if hits == total {
                break;
            }
        }
    }
    Ok(sum / denom as f64)
}

pub fn precision_at_k(ranking: &[usize], relevance: &[bool], k: usize) -> Result<f64> {
    check_lengths(ranking, relevance)?;
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidArgument(format!(
            "precision cutoff {k} outside 1..={}",
            ranking.len()
        )));
    }
    let hits = ranking[..k].iter().filter(|&&i| relevance[i]).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub map_at_k: Option<f64>,
    pub k_map: Option<usize>,
    pub precision_at_k: f64,
    pub k_prec: usize,
    pub per_query_ap: Vec<f64>,
    pub n_queries: usize,
    pub n_database: usize,
    /// Queries with no relevant database item; excluded from every mean.
    pub skipped_queries: usize,
}

struct QueryScore {
    ap: f64,
    ap_at_k: Option<f64>,
    precision: f64,
}

pub fn evaluate(
    queries: &BinaryCodeSet,
    database: &BinaryCodeSet,
    k_prec: usize,
    k_map: Option<usize>,
) -> Result<EvalReport> {
    if queries.bits() != database.bits() {
        return Err(Error::dim("query vs database code length", database.bits(), queries.bits()));
    }
    if k_prec == 0 || k_prec > database.len() {
        return Err(Error::InvalidArgument(format!(
            "precision cutoff {k_prec} outside 1..={}",
            database.len()
        )));
    }
    if k_map == Some(0) {
        return Err(Error::InvalidArgument("mAP cutoff must be positive".into()));
    }

    let scores: Vec<Option<QueryScore>> = (0..queries.len())
        .into_par_iter()
        .map(|q| -> Result<Option<QueryScore>> {
            let label = queries.labels()[q];
            let relevance: Vec<bool> = database.labels().iter().map(|&l| l == label).collect();
            if !relevance.contains(&true) {
                return Ok(None);
            }
            let ranking = rank_words(queries.code_words(q), database);
            Ok(Some(QueryScore {
                ap: average_precision(&ranking, &relevance, None)?,
                ap_at_k: k_map
                    .map(|k| average_precision(&ranking, &relevance, Some(k)))
                    .transpose()?,
                precision: precision_at_k(&ranking, &relevance, k_prec)?,
            }))
        })
        .collect::<Result<_>>()?;

    let scored: Vec<&QueryScore> = scores.iter().flatten().collect();
    if scored.is_empty() {
        return Err(Error::InvalidArgument(
            "no query has a relevant database item".into(),
        ));
    }
    let n = scored.len() as f64;
    let per_query_ap: Vec<f64> = scored.iter().map(|s| s.ap).collect();
    Ok(EvalReport {
        map: per_query_ap.iter().sum::<f64>() / n,
        map_at_k: k_map.map(|_| scored.iter().map(|s| s.ap_at_k.unwrap()).sum::<f64>() / n),
        k_map,
        precision_at_k: scored.iter().map(|s| s.precision).sum::<f64>() / n,
        k_prec,
        per_query_ap,
        n_queries: queries.len(),
        n_database: database.len(),
        skipped_queries: scores.len() - scored.len(),
    })
}

/// mAP as a function of training instances seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCurve {
    pub points: Vec<(usize, f64)>,
    pub auc: f64,
}

impl MapCurve {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        let auc = map_curve_auc(&points)?;
        Ok(MapCurve { points, auc })
    }
}

/// Trapezoidal area under the curve divided by its x-range, so a constant
/// curve at `m` scores `m`.
pub fn map_curve_auc(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "area under the mAP curve needs at least 2 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidArgument(
            "mAP curve x values must be strictly increasing".into(),
        ));
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0)
        .sum();
    let span = (points[points.len() - 1].0 - points[0].0) as f64;
    Ok(area / span)
}
