//! Exact top-K ad retrieval by predicted click probability.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::checkpoint::ModelCheckpoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredAd {
    pub ad: String,
    pub index: usize,
    pub score: f64,
}

/// Ads for one user, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedAds {
    pub user: String,
    pub k: usize,
    pub ads: Vec<ScoredAd>,
}

impl RankedAds {
    /// `user<TAB>rank<TAB>ad<TAB>score` lines, rank starting at 1.
    pub fn to_tsv(&self) -> String {
        self.ads
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{}\t{}\t{}\t{:.6}\n", self.user, i + 1, a.ad, a.score))
            .collect()
    }
}

/// Descending score, then ascending ad index.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

fn rank_user(ckpt: &ModelCheckpoint, user: usize, k: usize) -> Result<RankedAds> {
    let model = &ckpt.model;
    let mut scored = (0..model.num_ads())
        .map(|ad| Ok((ad, model.predict(user, ad)?)))
        .collect::<Result<Vec<(usize, f64)>>>()?;
    let keep = k.min(scored.len());
    if keep < scored.len() {
        scored.select_nth_unstable_by(keep, rank_order);
        scored.truncate(keep);
    }
    scored.sort_by(rank_order);
    Ok(RankedAds {
        user: ckpt.vocab.user_id(user).to_string(),
        k,
        ads: scored
            .into_iter()
            .map(|(index, score)| ScoredAd {
                ad: ckpt.vocab.ad_id(index).to_string(),
                index,
                score,
            })
            .collect(),
    })
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::config("k", "must be >= 1"));
    }
    Ok(())
}

/// The `k` ads with the highest click probability for `user_id`; ties are
/// broken by ascending ad index.
pub fn topk(ckpt: &ModelCheckpoint, user_id: &str, k: usize) -> Result<RankedAds> {
    check_k(k)?;
    let user = ckpt.vocab.require_user(user_id)?;
    rank_user(ckpt, user, k)
}

/// [`topk`] for many users, scored in parallel on the current rayon pool.
pub fn batch_topk<S: AsRef<str> + Sync>(
    ckpt: &ModelCheckpoint,
    user_ids: &[S],
    k: usize,
) -> Result<Vec<RankedAds>> {
    check_k(k)?;
    let users = user_ids
        .iter()
        .enumerate()
        .map(|(position, id)| {
            let id = id.as_ref();
            ckpt.vocab.user_index(id).ok_or_else(|| Error::UnknownUserAt {
                id: id.to_string(),
                position,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    users.par_iter().map(|&u| rank_user(ckpt, u, k)).collect()
}
