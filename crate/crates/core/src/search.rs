//! In-memory tag-indexed asset catalog with Jaccard relevance scoring and
//! co-occurrence based category suggestions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAGE_SIZE: usize = 10;
pub const MAX_CATEGORIES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetType {
    Image,
    Video,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub id: String,
    pub tags: BTreeSet<String>,
    #[serde(rename = "type")]
    pub asset_type: AssetType,
    pub premium: bool,
}

impl Asset {
    pub fn new<I, S>(id: impl Into<String>, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            id: id.into(),
            tags: tags.into_iter().map(|t| t.as_ref().to_lowercase()).collect(),
            asset_type: AssetType::Image,
            premium: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub query: Vec<String>,
    pub offset: usize,
    pub entries: Vec<ResultEntry>,
}

impl ResultPage {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scores padded with zeros to a full page.
    pub fn padded_scores(&self) -> [f64; PAGE_SIZE] {
        let mut out = [0.0; PAGE_SIZE];
        for (o, e) in out.iter_mut().zip(&self.entries) {
            *o = e.score;
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryOptions(pub Vec<String>);

impl CategoryOptions {
    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    assets: Vec<Asset>,
    by_id: HashMap<String, usize>,
    index: BTreeMap<String, BTreeSet<usize>>,
}

impl Catalog {
    pub fn load<I: IntoIterator<Item = Asset>>(records: I) -> Result<Self> {
        let mut catalog = Catalog::default();
        for asset in records {
            catalog.insert(asset)?;
        }
        Ok(catalog)
    }

    /// Reads one JSON asset per line; blank lines are skipped.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut catalog = Catalog::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let asset: Asset =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            catalog.insert(asset)?;
        }
        Ok(catalog)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.assets {
            out.push_str(&serde_json::to_string(a).expect("asset serializes"));
            out.push('\n');
        }
        out
    }

    fn insert(&mut self, mut asset: Asset) -> Result<()> {
        if asset.id.is_empty() {
            return Err(Error::EmptyAssetId);
        }
        if asset.tags.is_empty() {
            return Err(Error::EmptyTags(asset.id));
        }
        if self.by_id.contains_key(&asset.id) {
            return Err(Error::DuplicateAsset(asset.id));
        }
        asset.tags = asset.tags.iter().map(|t| t.to_lowercase()).collect();
        let slot = self.assets.len();
        for tag in &asset.tags {
            self.index.entry(tag.clone()).or_default().insert(slot);
        }
        self.by_id.insert(asset.id.clone(), slot);
        self.assets.push(asset);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn get(&self, id: &str) -> Option<&Asset> {
        self.by_id.get(id).map(|&i| &self.assets[i])
    }

    /// Ids of assets carrying `tag`, in ascending order.
    pub fn ids_for_tag(&self, tag: &str) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .index
            .get(tag)
            .map(|slots| slots.iter().map(|&i| self.assets[i].id.as_str()).collect())
            .unwrap_or_default();
        ids.sort_unstable();
        ids
    }

    pub fn tags(&self) -> impl Iterator<Item = (&str, usize)> {
        self.index.iter().map(|(t, s)| (t.as_str(), s.len()))
    }

    /// Every asset with a positive score, best first.
    pub fn rank(&self, query: &[String]) -> Result<Vec<ResultEntry>> {
        let tokens: BTreeSet<String> = query.iter().map(|t| t.to_lowercase()).collect();
        if tokens.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let candidates: BTreeSet<usize> =
            tokens.iter().filter_map(|t| self.index.get(t)).flat_map(|s| s.iter().copied()).collect();
        let mut entries: Vec<ResultEntry> = candidates
            .into_iter()
            .map(|i| {
                let a = &self.assets[i];
                ResultEntry { id: a.id.clone(), score: jaccard(&tokens, &a.tags) }
            })
            .filter(|e| e.score > 0.0)
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        Ok(entries)
    }

    pub fn search(&self, query: &[String], offset: usize) -> Result<ResultPage> {
        let ranked = self.rank(query)?;
        let entries = ranked.into_iter().skip(offset * PAGE_SIZE).take(PAGE_SIZE).collect();
        Ok(ResultPage { query: query.to_vec(), offset, entries })
    }

    /// The most frequent non-query tags among the page's assets.
    pub fn cluster_categories(&self, query: &[String], page: &ResultPage) -> CategoryOptions {
        let query: BTreeSet<String> = query.iter().map(|t| t.to_lowercase()).collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for entry in &page.entries {
            let Some(asset) = self.get(&entry.id) else { continue };
            for tag in &asset.tags {
                if !query.contains(tag) {
                    *counts.entry(tag.as_str()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        // BTreeMap iteration is lexicographic and the sort is stable.
        ranked.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
        CategoryOptions(ranked.into_iter().take(MAX_CATEGORIES).map(|(t, _)| t.to_string()).collect())
    }
}

pub fn jaccard(query: &BTreeSet<String>, tags: &BTreeSet<String>) -> f64 {
    let inter = query.intersection(tags).count();
    if inter == 0 {
        return 0.0;
    }
    let union = query.len() + tags.len() - inter;
    inter as f64 / union as f64
}

pub fn tokens(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}
