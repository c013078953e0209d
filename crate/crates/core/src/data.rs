//! Interaction logs, vocabularies, negative sampling and the synthetic
//! hierarchical dataset.
//!
//! Log format: UTF-8 CSV without a header, one `user_id,ad_id,label[,timestamp]`
//! record per line. Blank lines and lines starting with `#` are skipped.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LabeledPair;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionRecord {
    pub user: String,
    pub ad: String,
    pub label: u8,
    pub timestamp: Option<i64>,
}

impl InteractionRecord {
    pub fn new(user: impl Into<String>, ad: impl Into<String>, label: u8) -> Self {
        Self {
            user: user.into(),
            ad: ad.into(),
            label,
            timestamp: None,
        }
    }
}

fn parse_line(line: &str) -> std::result::Result<InteractionRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if !(3..=4).contains(&fields.len()) {
        return Err(format!("expected 3 or 4 fields, found {}", fields.len()));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err("empty id".into());
    }
    let label = match fields[2] {
        "0" => 0,
        "1" => 1,
        other => return Err(format!("label must be 0 or 1, found `{other}`")),
    };
    let timestamp = match fields.get(3) {
        Some(t) => Some(
            t.parse::<i64>()
                .map_err(|_| format!("timestamp `{t}` is not a decimal integer"))?,
        ),
        None => None,
    };
    Ok(InteractionRecord {
        user: fields[0].to_string(),
        ad: fields[1].to_string(),
        label,
        timestamp,
    })
}

pub fn parse_interactions(text: &str, path: &Path) -> Result<Vec<InteractionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let rec = parse_line(line).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<Vec<InteractionRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, path)
}

pub fn write_interactions(path: impl AsRef<Path>, records: &[InteractionRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let res = match r.timestamp {
            Some(t) => writeln!(w, "{},{},{},{}", r.user, r.ad, r.label, t),
            None => writeln!(w, "{},{},{}", r.user, r.ad, r.label),
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dense id ↔ index maps for users and ads, ordered by first appearance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabIds", into = "VocabIds")]
pub struct Vocab {
    users: Vec<String>,
    ads: Vec<String>,
    user_index: HashMap<String, usize>,
    ad_index: HashMap<String, usize>,
    user_counts: Vec<usize>,
    ad_counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabIds {
    users: Vec<String>,
    ads: Vec<String>,
}

impl From<Vocab> for VocabIds {
    fn from(v: Vocab) -> Self {
        VocabIds {
            users: v.users,
            ads: v.ads,
        }
    }
}

impl TryFrom<VocabIds> for Vocab {
    type Error = Error;

    fn try_from(ids: VocabIds) -> Result<Self> {
        Vocab::from_ids(ids.users, ids.ads)
    }
}

fn index_of(ids: &[String], what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(Error::domain(format!("duplicate {what} id `{id}`")));
        }
    }
    Ok(map)
}

impl Vocab {
    /// Builds a vocabulary from explicit ordered id lists (counts are zero).
    pub fn from_ids(users: Vec<String>, ads: Vec<String>) -> Result<Self> {
        let user_index = index_of(&users, "user")?;
        let ad_index = index_of(&ads, "ad")?;
        Ok(Self {
            user_counts: vec![0; users.len()],
            ad_counts: vec![0; ads.len()],
            users,
            ads,
            user_index,
            ad_index,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_ads(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty() && self.ads.is_empty()
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn ad_index(&self, id: &str) -> Option<usize> {
        self.ad_index.get(id).copied()
    }

    pub fn user_id(&self, idx: usize) -> &str {
        &self.users[idx]
    }

    pub fn ad_id(&self, idx: usize) -> &str {
        &self.ads[idx]
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn ads(&self) -> &[String] {
        &self.ads
    }

    pub fn user_count(&self, idx: usize) -> usize {
        self.user_counts[idx]
    }

    pub fn ad_count(&self, idx: usize) -> usize {
        self.ad_counts[idx]
    }

    pub fn require_user(&self, id: &str) -> Result<usize> {
        self.user_index(id).ok_or_else(|| Error::UnknownEntity {
            kind: "user",
            id: id.to_string(),
        })
    }

    pub fn require_ad(&self, id: &str) -> Result<usize> {
        self.ad_index(id).ok_or_else(|| Error::UnknownEntity {
            kind: "ad",
            id: id.to_string(),
        })
    }

    /// Index form of `r`, or `None` if either entity is unknown.
    pub fn encode(&self, r: &InteractionRecord) -> Option<LabeledPair> {
        Some(LabeledPair::new(self.user_index(&r.user)?, self.ad_index(&r.ad)?, r.label))
    }

    pub fn decode(&self, p: &LabeledPair) -> InteractionRecord {
        InteractionRecord::new(self.user_id(p.user), self.ad_id(p.ad), p.label)
    }
}

pub fn build_vocab(records: &[InteractionRecord]) -> Vocab {
    fn intern(
        id: &str,
        ids: &mut Vec<String>,
        index: &mut HashMap<String, usize>,
        counts: &mut Vec<usize>,
    ) {
        let i = *index.entry(id.to_string()).or_insert_with(|| {
            ids.push(id.to_string());
            counts.push(0);
            ids.len() - 1
        });
        counts[i] += 1;
    }
    let mut v = Vocab::default();
    for r in records {
        intern(&r.user, &mut v.users, &mut v.user_index, &mut v.user_counts);
        intern(&r.ad, &mut v.ads, &mut v.ad_index, &mut v.ad_counts);
    }
    v
}

/// Appends `k` uniformly drawn negatives after every positive. A negative
/// keeps the positive's user and never repeats its ad.
pub fn sample_negative_pairs<R: Rng>(
    pairs: &[LabeledPair],
    num_ads: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<LabeledPair>> {
    if k == 0 {
        return Err(Error::config("negatives_per_positive", "must be >= 1"));
    }
    if num_ads < 2 {
        return Err(Error::config("ads", "negative sampling needs at least 2 ads"));
    }
    let positives = pairs.iter().filter(|p| p.label == 1).count();
    let mut out = Vec::with_capacity(pairs.len() + positives * k);
    for p in pairs {
        out.push(*p);
        if p.label == 1 {
            for _ in 0..k {
                let mut ad = rng.random_range(0..num_ads - 1);
                if ad >= p.ad {
                    ad += 1;
                }
                out.push(LabeledPair::new(p.user, ad, 0));
            }
        }
    }
    Ok(out)
}

/// Record-level negative sampling over `vocab`; unknown entities are rejected.
pub fn sample_negatives(
    records: &[InteractionRecord],
    vocab: &Vocab,
    k: usize,
    seed: u64,
) -> Result<Vec<InteractionRecord>> {
    let pairs = records
        .iter()
        .map(|r| {
            vocab.encode(r).ok_or_else(|| Error::UnknownEntity {
                kind: "entity",
                id: format!("{}/{}", r.user, r.ad),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = seeds::rng(seed, seeds::SAMPLING);
    let out = sample_negative_pairs(&pairs, vocab.num_ads(), k, &mut rng)?;
    Ok(out.iter().map(|p| vocab.decode(p)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTreeSpec {
    pub depth: usize,
    pub branching: usize,
    pub users_per_leaf: usize,
    pub click_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticTreeSpec {
    fn default() -> Self {
        Self {
            depth: 6,
            branching: 3,
            users_per_leaf: 20,
            click_noise: 0.1,
            seed: 42,
        }
    }
}

impl SyntheticTreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::config("depth", "must be >= 1"));
        }
        if self.branching < 2 {
            return Err(Error::config("branching", "must be >= 2"));
        }
        if self.users_per_leaf < 1 {
            return Err(Error::config("users_per_leaf", "must be >= 1"));
        }
        if !(0.0..0.5).contains(&self.click_noise) {
            return Err(Error::config("click_noise", "must lie in [0, 0.5)"));
        }
        let nodes = (0..=self.depth as u32)
            .try_fold(0usize, |acc, i| acc.checked_add(self.branching.checked_pow(i)?));
        if nodes.is_none_or(|n| n > 50_000_000) {
            return Err(Error::config("depth", "tree too large"));
        }
        Ok(())
    }

    /// `Σ_{i=0..depth} branching^i`.
    pub fn num_nodes(&self) -> usize {
        (0..=self.depth as u32).map(|i| self.branching.pow(i)).sum()
    }

    pub fn num_leaves(&self) -> usize {
        self.branching.pow(self.depth as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<InteractionRecord>,
    /// `(parent ad id, child ad id)` per tree edge.
    pub edges: Vec<(String, String)>,
    /// Home leaf node of every user, by user ordinal.
    pub home_leaf: Vec<usize>,
}

pub fn ad_node_id(node: usize) -> String {
    format!("ad{node}")
}

pub fn user_id(ordinal: usize) -> String {
    format!("u{ordinal}")
}

/// Generates a complete ad tree (heap numbering: node `i` has children
/// `i·b + 1 ..= i·b + b`) and users attached to leaves.
///
/// Every user gets one record for each ad on its root-to-leaf path
/// (clicked with probability `1 − noise`) plus an equal number of distinct
/// off-path ads drawn uniformly (clicked with probability `noise`).
pub fn generate_tree_dataset(spec: &SyntheticTreeSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let b = spec.branching;
    let n = spec.num_nodes();
    let first_leaf = n - spec.num_leaves();
    let edges = (1..n)
        .map(|child| (ad_node_id((child - 1) / b), ad_node_id(child)))
        .collect();

    let mut rng = seeds::rng(spec.seed, "tree");
    let path_len = spec.depth + 1;
    let mut records = Vec::new();
    let mut home_leaf = Vec::new();
    let mut on_path = vec![false; n];
    let mut path = Vec::with_capacity(path_len);
    for leaf in first_leaf..n {
        path.clear();
        let mut node = leaf;
        loop {
            path.push(node);
            if node == 0 {
                break;
            }
            node = (node - 1) / b;
        }
        path.reverse();
        for &p in &path {
            on_path[p] = true;
        }
        for _ in 0..spec.users_per_leaf {
            let uid = user_id(home_leaf.len());
            home_leaf.push(leaf);
            for &ad in &path {
                let label = u8::from(!rng.random_bool(spec.click_noise));
                records.push(InteractionRecord::new(uid.clone(), ad_node_id(ad), label));
            }
            // Off-path ads: draw among the n − path_len nodes not on the path.
            let off_count = path_len.min(n - path_len);
            for j in index::sample(&mut rng, n - path_len, off_count) {
                let ad = nth_off_path(&on_path, j);
                let label = u8::from(rng.random_bool(spec.click_noise));
                records.push(InteractionRecord::new(uid.clone(), ad_node_id(ad), label));
            }
        }
        for &p in &path {
            on_path[p] = false;
        }
    }
    Ok(SyntheticDataset {
        records,
        edges,
        home_leaf,
    })
}

fn nth_off_path(on_path: &[bool], j: usize) -> usize {
    on_path
        .iter()
        .enumerate()
        .filter(|(_, p)| !**p)
        .nth(j)
        .map(|(i, _)| i)
        .expect("index within off-path range")
}

pub fn write_edges(path: impl AsRef<Path>, edges: &[(String, String)]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (p, c) in edges {
        writeln!(w, "{p},{c}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Splits into (train, test). With timestamps on every record the most
/// recent `test_fraction` becomes the test set; otherwise a seeded random
/// subset does. Relative order is preserved within each side.
pub fn split_train_test(
    records: &[InteractionRecord],
    test_fraction: f64,
    seed: u64,
) -> (Vec<InteractionRecord>, Vec<InteractionRecord>) {
    let n = records.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut is_test = vec![false; n];
    if n > 0 && records.iter().all(|r| r.timestamp.is_some()) {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| records[i].timestamp);
        for &i in &order[n - n_test..] {
            is_test[i] = true;
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeds::rng(seed, seeds::SPLIT));
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
    }
    let mut train = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (r, t) in records.iter().zip(is_test) {
        if t {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    (train, test)
}
