//! Hierarchical short-video catalog.
//!
//! Every item carries a three-level category path (coarse to fine). A catalog
//! is only accepted when those paths form a tree: each level-2 name has one
//! level-1 parent and each level-3 name has one level-2 parent.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of category levels in the hierarchy.
pub const LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoItem {
    pub item_id: String,
    pub title: String,
    #[serde(default)]
    pub tag: String,
    pub category_l1: String,
    pub category_l2: String,
    pub category_l3: String,
    pub creator_popularity: u64,
}

impl VideoItem {
    /// Category names ordered from level 1 to level 3.
    pub fn categories(&self) -> [&str; LEVELS] {
        [&self.category_l1, &self.category_l2, &self.category_l3]
    }

    /// Category at `level` (1-based).
    pub fn category(&self, level: usize) -> &str {
        self.categories()[level - 1]
    }

    fn normalize(&mut self) {
        for name in [
            &mut self.category_l1,
            &mut self.category_l2,
            &mut self.category_l3,
        ] {
            let trimmed = name.trim();
            if trimmed.len() != name.len() {
                *name = trimmed.to_string();
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.item_id.is_empty() {
            return Err(Error::InvalidItem {
                item_id: self.item_id.clone(),
                message: "empty item_id".into(),
            });
        }
        for (level, name) in self.categories().iter().enumerate() {
            if name.is_empty() {
                return Err(Error::InvalidItem {
                    item_id: self.item_id.clone(),
                    message: format!("empty category_l{}", level + 1),
                });
            }
        }
        Ok(())
    }
}

/// Category names per level plus parent/child links between adjacent levels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryHierarchy {
    names: [BTreeSet<String>; LEVELS],
    // children[0]: level-1 name -> level-2 names, children[1]: level-2 -> level-3
    children: [BTreeMap<String, BTreeSet<String>>; LEVELS - 1],
}

impl CategoryHierarchy {
    fn from_items(items: &[VideoItem]) -> Result<Self> {
        let mut hierarchy = CategoryHierarchy::default();
        let mut parents: [HashMap<&str, &str>; LEVELS - 1] = Default::default();

        for item in items {
            let path = item.categories();
            for (level, name) in path.iter().enumerate() {
                hierarchy.names[level].insert(name.to_string());
            }
            for link in 0..LEVELS - 1 {
                let (parent, child) = (path[link], path[link + 1]);
                match parents[link].get(child) {
                    Some(existing) if *existing != parent => {
                        return Err(Error::HierarchyViolation {
                            level: link + 2,
                            child: child.to_string(),
                            first: existing.to_string(),
                            second: parent.to_string(),
                        });
                    }
                    Some(_) => {}
                    None => {
                        parents[link].insert(child, parent);
                        hierarchy.children[link]
                            .entry(parent.to_string())
                            .or_default()
                            .insert(child.to_string());
                    }
                }
            }
        }
        Ok(hierarchy)
    }

    /// Distinct names at `level` (1-based).
    pub fn names(&self, level: usize) -> &BTreeSet<String> {
        &self.names[level - 1]
    }

    /// Children at `level + 1` of the category `name` at `level`.
    pub fn children(&self, level: usize, name: &str) -> Option<&BTreeSet<String>> {
        self.children.get(level - 1)?.get(name)
    }

    pub fn unique_counts(&self) -> [usize; LEVELS] {
        [
            self.names[0].len(),
            self.names[1].len(),
            self.names[2].len(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyStats {
    pub unique_counts: [usize; LEVELS],
    /// Mean number of children for level-1 and level-2 categories.
    pub avg_children: [f64; LEVELS - 1],
}

/// An immutable, validated item catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: Vec<VideoItem>,
    hierarchy: CategoryHierarchy,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    /// Validates items and builds the category hierarchy.
    ///
    /// Category names are trimmed; identity is otherwise exact string
    /// equality.
    pub fn new(mut items: Vec<VideoItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut by_id = HashMap::with_capacity(items.len());
        for (idx, item) in items.iter_mut().enumerate() {
            item.normalize();
            item.validate()?;
            if by_id.insert(item.item_id.clone(), idx).is_some() {
                return Err(Error::DuplicateItem(item.item_id.clone()));
            }
        }
        let hierarchy = CategoryHierarchy::from_items(&items)?;
        Ok(Catalog {
            items,
            hierarchy,
            by_id,
        })
    }

    pub fn items(&self) -> &[VideoItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, index: usize) -> &VideoItem {
        &self.items[index]
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.by_id.get(item_id).copied()
    }

    pub fn hierarchy(&self) -> &CategoryHierarchy {
        &self.hierarchy
    }

    pub fn stats(&self) -> HierarchyStats {
        hierarchy_stats(self)
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut writer, item)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        self.write_jsonl(&mut writer)
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Loads a JSONL catalog: one JSON object per line, blank lines ignored.
///
/// A missing `tag` field is read as an empty string.
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: VideoItem = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        items.push(item);
    }
    Catalog::new(items)
}

pub fn hierarchy_stats(catalog: &Catalog) -> HierarchyStats {
    let hierarchy = catalog.hierarchy();
    let unique_counts = hierarchy.unique_counts();
    let mut avg_children = [0.0; LEVELS - 1];
    for (link, avg) in avg_children.iter_mut().enumerate() {
        let parents = &hierarchy.names[link];
        let total: usize = parents
            .iter()
            .map(|p| hierarchy.children[link].get(p).map_or(0, BTreeSet::len))
            .sum();
        *avg = total as f64 / parents.len() as f64;
    }
    HierarchyStats {
        unique_counts,
        avg_children,
    }
}

/// Branching profile for synthetic catalogs: the number of level-1 roots and
/// the mean child count of level-1 and level-2 categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchingShape {
    pub roots: usize,
    pub level2_per_root: f64,
    pub level3_per_level2: f64,
}

impl BranchingShape {
    pub fn new(roots: usize, level2_per_root: f64, level3_per_level2: f64) -> Result<Self> {
        let shape = BranchingShape {
            roots,
            level2_per_root,
            level3_per_level2,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// 21 roots, 55 level-2 and 232 level-3 categories.
    pub fn short_video() -> Self {
        BranchingShape {
            roots: 21,
            level2_per_root: 55.0 / 21.0,
            level3_per_level2: 232.0 / 55.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.roots == 0 {
            return Err(Error::InvalidShape("need at least one root".into()));
        }
        for (name, avg) in [
            ("level2_per_root", self.level2_per_root),
            ("level3_per_level2", self.level3_per_level2),
        ] {
            if !avg.is_finite() || avg < 1.0 {
                return Err(Error::InvalidShape(format!(
                    "{name} must be >= 1, got {avg}"
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for BranchingShape {
    type Err = Error;

    /// Parses `"roots,avg_l2,avg_l3"`, e.g. `"21,2.62,4.22"`, or the name
    /// `short-video`.
    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "short-video" {
            return Ok(BranchingShape::short_video());
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidShape(format!(
                "expected three comma-separated values, got {s:?}"
            )));
        }
        let roots = parts[0]
            .parse::<usize>()
            .map_err(|e| Error::InvalidShape(format!("roots {:?}: {e}", parts[0])))?;
        let mut avgs = [0.0; 2];
        for (slot, part) in avgs.iter_mut().zip(&parts[1..]) {
            *slot = part
                .parse::<f64>()
                .map_err(|e| Error::InvalidShape(format!("{part:?}: {e}")))?;
        }
        BranchingShape::new(roots, avgs[0], avgs[1])
    }
}

const ROOT_NAMES: [&str; 21] = [
    "sports",
    "food",
    "gaming",
    "music",
    "dance",
    "comedy",
    "travel",
    "pets",
    "fashion",
    "beauty",
    "technology",
    "cars",
    "history",
    "education",
    "finance",
    "parenting",
    "fitness",
    "film",
    "news",
    "rural life",
    "crafts",
];

const TITLE_WORDS: [&str; 12] = [
    "amazing",
    "daily",
    "quick",
    "ultimate",
    "funny",
    "relaxing",
    "honest",
    "behind the scenes",
    "top 5",
    "first look",
    "late night",
    "weekend",
];

/// Splits `total` children among `parents`: every parent gets the floor of
/// the mean, and the remainder goes to randomly chosen distinct parents.
fn child_counts(parents: usize, mean: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total = ((parents as f64) * mean).round().max(parents as f64) as usize;
    let base = (total / parents).max(1);
    let mut counts = vec![base; parents];
    let extra = total.saturating_sub(base * parents);
    let mut order: Vec<usize> = (0..parents).collect();
    order.shuffle(rng);
    for &p in order.iter().take(extra) {
        counts[p] += 1;
    }
    counts
}

/// Generates a synthetic catalog whose category paths form a tree with the
/// requested branching profile. Pure in `(seed, n_items, shape)`.
pub fn generate_fixture(seed: u64, n_items: usize, shape: BranchingShape) -> Result<Catalog> {
    if n_items == 0 {
        return Err(Error::InvalidShape("n_items must be positive".into()));
    }
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let roots: Vec<String> = (0..shape.roots)
        .map(|i| match ROOT_NAMES.get(i) {
            Some(name) => name.to_string(),
            None => format!("topic {}", i + 1),
        })
        .collect();

    let mut mids: Vec<(usize, String)> = Vec::new();
    for (r, count) in child_counts(roots.len(), shape.level2_per_root, &mut rng)
        .into_iter()
        .enumerate()
    {
        for j in 0..count {
            mids.push((r, format!("{}-{}", roots[r], j + 1)));
        }
    }

    let mut leaves: Vec<(usize, String)> = Vec::new();
    for (m, count) in child_counts(mids.len(), shape.level3_per_level2, &mut rng)
        .into_iter()
        .enumerate()
    {
        for j in 0..count {
            leaves.push((m, format!("{}-{}", mids[m].1, j + 1)));
        }
    }

    // Cover every leaf once before sampling the rest uniformly.
    let mut leaf_order: Vec<usize> = (0..leaves.len()).collect();
    leaf_order.shuffle(&mut rng);

    let mut items = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let leaf = if i < leaf_order.len() {
            leaf_order[i]
        } else {
            rng.random_range(0..leaves.len())
        };
        let (mid, leaf_name) = &leaves[leaf];
        let (root, mid_name) = &mids[*mid];
        let root_name = &roots[*root];
        let word = TITLE_WORDS[rng.random_range(0..TITLE_WORDS.len())];
        let exponent: f64 = rng.random_range(1.0..6.0);
        items.push(VideoItem {
            item_id: format!("v{:05}", i + 1),
            title: format!("{word} {leaf_name} video {}", i + 1),
            tag: format!("#{}", mid_name.replace(' ', "")),
            category_l1: root_name.clone(),
            category_l2: mid_name.clone(),
            category_l3: leaf_name.clone(),
            creator_popularity: 10f64.powf(exponent).floor() as u64,
        });
    }
    Catalog::new(items)
}

/// Text block describing an item to a user agent. Field order is fixed.
pub fn summarize_item(item: &VideoItem) -> String {
    format!(
        "Title: {}\nTag: {}\nCategory (level 1): {}\nCategory (level 2): {}\nCategory (level 3): {}\nCreator popularity: {} followers",
        item.title,
        item.tag,
        item.category_l1,
        item.category_l2,
        item.category_l3,
        item.creator_popularity
    )
}
