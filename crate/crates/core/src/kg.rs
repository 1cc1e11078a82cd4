//! Triple loading, vocabularies, and the augmented-relation knowledge graph.
//!
//! Base relations occupy ids `0..R`. The graph adds one inverse per base
//! relation at `R..2R` and a self-loop relation at `2R`, so every chain
//! rule body can be expressed as a walk over `2R + 1` adjacency matrices.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::SparseRelationMatrix;

pub type EntityId = usize;
pub type RelId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: EntityId,
    pub rel: RelId,
    pub tail: EntityId,
}

impl Triplet {
    pub fn new(head: EntityId, rel: RelId, tail: EntityId) -> Self {
        Self { head, rel, tail }
    }
}

/// Insertion-ordered string interner.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.intern(&t.into());
        }
        v
    }

    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; the line index is the id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for t in &self.tokens {
            writeln!(f, "{t}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut v = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            if v.index.contains_key(line) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("duplicate token `{line}`"),
                });
            }
            v.intern(line);
        }
        Ok(v)
    }
}

/// Reads `head<TAB>relation<TAB>tail` lines, registering new tokens in the
/// supplied vocabularies. Blank lines are skipped.
pub fn load_split(path: &Path, entities: &mut Vocab, relations: &mut Vocab) -> Result<Vec<Triplet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let head = entities.intern(fields[0]);
        let rel = relations.intern(fields[1]);
        let tail = entities.intern(fields[2]);
        out.push(Triplet { head, rel, tail });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub triplet_count: usize,
    pub entity_count: usize,
    pub relation_count: usize,
    pub avg_degree: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "triplets = {}", self.triplet_count)?;
        writeln!(f, "entities = {}", self.entity_count)?;
        writeln!(f, "relations = {}", self.relation_count)?;
        writeln!(f, "avg_degree = {:.1}", self.avg_degree)
    }
}

/// Train/valid/test splits sharing one entity and one relation vocabulary.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub entities: Vocab,
    pub relations: Vocab,
    pub train: Vec<Triplet>,
    pub valid: Vec<Triplet>,
    pub test: Vec<Triplet>,
    train_entities: usize,
    train_relations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

impl Dataset {
    /// Loads `train.txt`, `valid.txt`, `test.txt` from `dir`. When the
    /// directory also holds `entities.txt`/`relations.txt` dumps, ids are
    /// seeded from them.
    pub fn load(dir: &Path) -> Result<Self> {
        let (mut entities, mut relations) = (Vocab::new(), Vocab::new());
        let ent_dump = dir.join("entities.txt");
        let rel_dump = dir.join("relations.txt");
        if ent_dump.exists() && rel_dump.exists() {
            entities = Vocab::read(&ent_dump)?;
            relations = Vocab::read(&rel_dump)?;
        }
        Self::load_with(dir.join("train.txt"), dir.join("valid.txt"), dir.join("test.txt"), entities, relations)
    }

    pub fn load_with(
        train: PathBuf,
        valid: PathBuf,
        test: PathBuf,
        mut entities: Vocab,
        mut relations: Vocab,
    ) -> Result<Self> {
        let train = load_split(&train, &mut entities, &mut relations)?;
        let mut seen_e = vec![false; entities.len()];
        let mut seen_r = vec![false; relations.len()];
        for t in &train {
            seen_e[t.head] = true;
            seen_e[t.tail] = true;
            seen_r[t.rel] = true;
        }
        let valid = load_split(&valid, &mut entities, &mut relations)?;
        let test = load_split(&test, &mut entities, &mut relations)?;
        let train_entities = seen_e.iter().filter(|&&s| s).count();
        let train_relations = seen_r.iter().filter(|&&s| s).count();
        let ds = Self {
            entities,
            relations,
            train,
            valid,
            test,
            train_entities,
            train_relations,
        };
        let unseen = ds.entities.len() - ds.train_entities;
        if unseen > 0 {
            log::warn!("{unseen} entities appear only outside the training split");
        }
        Ok(ds)
    }

    pub fn from_triplets(entities: Vocab, relations: Vocab, train: Vec<Triplet>, valid: Vec<Triplet>, test: Vec<Triplet>) -> Self {
        let mut seen_e = vec![false; entities.len()];
        let mut seen_r = vec![false; relations.len()];
        for t in &train {
            seen_e[t.head] = true;
            seen_e[t.tail] = true;
            seen_r[t.rel] = true;
        }
        Self {
            train_entities: seen_e.iter().filter(|&&s| s).count(),
            train_relations: seen_r.iter().filter(|&&s| s).count(),
            entities,
            relations,
            train,
            valid,
            test,
        }
    }

    pub fn split(&self, split: Split) -> &[Triplet] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Entities and relations that never occur in the training split.
    pub fn unseen_counts(&self) -> (usize, usize) {
        (self.entities.len() - self.train_entities, self.relations.len() - self.train_relations)
    }

    pub fn stats(&self) -> DatasetStats {
        let triplet_count = self.train.len() + self.valid.len() + self.test.len();
        let entity_count = self.entities.len();
        DatasetStats {
            triplet_count,
            entity_count,
            relation_count: self.relations.len(),
            avg_degree: if entity_count == 0 {
                0.0
            } else {
                2.0 * triplet_count as f64 / entity_count as f64
            },
        }
    }

    pub fn build_graph(&self) -> Result<KnowledgeGraph> {
        KnowledgeGraph::build(&self.train, self.entities.len(), self.relations.len())
    }

    /// Display name of an augmented relation id.
    pub fn relation_name(&self, space: RelationSpace, rel: RelId) -> String {
        if rel == space.self_loop() {
            SELF_LOOP_NAME.to_string()
        } else if space.is_inverse(rel) {
            format!("{INVERSE_PREFIX}{}", self.relations.name(space.base_of(rel)))
        } else {
            self.relations.name(rel).to_string()
        }
    }

    /// Inverse of [`Dataset::relation_name`]. Plain names win over the
    /// `inv_` reading when both would match.
    pub fn relation_id(&self, space: RelationSpace, name: &str) -> Result<RelId> {
        if name == SELF_LOOP_NAME {
            return Ok(space.self_loop());
        }
        if let Some(id) = self.relations.id(name) {
            return Ok(id);
        }
        if let Some(base) = name.strip_prefix(INVERSE_PREFIX).and_then(|b| self.relations.id(b)) {
            return Ok(space.inverse(base));
        }
        Err(Error::Lookup {
            kind: "relation",
            name: name.to_string(),
        })
    }

    pub fn entity_id(&self, name: &str) -> Result<EntityId> {
        self.entities.id(name).ok_or_else(|| Error::Lookup {
            kind: "entity",
            name: name.to_string(),
        })
    }
}

pub const INVERSE_PREFIX: &str = "inv_";
pub const SELF_LOOP_NAME: &str = "self_loop";

/// Id layout `[r_1..r_R, r_1^-1..r_R^-1, self_loop]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelationSpace {
    base: usize,
}

impl RelationSpace {
    pub fn new(base: usize) -> Self {
        Self { base }
    }

    pub fn base_count(&self) -> usize {
        self.base
    }

    pub fn count(&self) -> usize {
        2 * self.base + 1
    }

    pub fn self_loop(&self) -> RelId {
        2 * self.base
    }

    pub fn is_inverse(&self, r: RelId) -> bool {
        r >= self.base && r < 2 * self.base
    }

    /// Inverse of any non-self-loop relation; self-loop maps to itself.
    pub fn inverse(&self, r: RelId) -> RelId {
        if r < self.base {
            r + self.base
        } else if r < 2 * self.base {
            r - self.base
        } else {
            r
        }
    }

    pub fn base_of(&self, r: RelId) -> RelId {
        if r < self.base {
            r
        } else {
            r - self.base
        }
    }
}

/// Immutable training graph with per-relation adjacency over the augmented
/// relation space.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    num_entities: usize,
    space: RelationSpace,
    adjacency: Vec<SparseRelationMatrix>,
}

impl KnowledgeGraph {
    pub fn build(train: &[Triplet], num_entities: usize, num_base_relations: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("training split"));
        }
        let space = RelationSpace::new(num_base_relations);
        let mut cells: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_base_relations];
        for t in train {
            assert!(
                t.head < num_entities && t.tail < num_entities && t.rel < num_base_relations,
                "triplet {t:?} outside vocabulary bounds"
            );
            cells[t.rel].push((t.head, t.tail));
        }
        let mut adjacency: Vec<SparseRelationMatrix> = cells
            .into_iter()
            .map(|c| SparseRelationMatrix::from_cells(num_entities, num_entities, c))
            .collect();
        let inverses: Vec<SparseRelationMatrix> = adjacency.iter().map(|m| m.transpose()).collect();
        adjacency.extend(inverses);
        adjacency.push(SparseRelationMatrix::identity(num_entities));
        Ok(Self {
            num_entities,
            space,
            adjacency,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn relations(&self) -> RelationSpace {
        self.space
    }

    pub fn augmented_relation_count(&self) -> usize {
        self.space.count()
    }

    pub fn adjacency(&self, rel: RelId) -> &SparseRelationMatrix {
        &self.adjacency[rel]
    }

    pub fn contains(&self, t: Triplet) -> bool {
        self.adjacency[t.rel].contains(t.head, t.tail)
    }

    /// Base-relation edge counts leaving / entering each entity
    /// (`out[e][r]`, `in[e][r]`).
    pub fn relation_degrees(&self) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
        let b = self.space.base_count();
        let mut out_deg = vec![vec![0u32; b]; self.num_entities];
        let mut in_deg = vec![vec![0u32; b]; self.num_entities];
        for r in 0..b {
            for (i, j) in self.adjacency[r].cells() {
                out_deg[i][r] += 1;
                in_deg[j][r] += 1;
            }
        }
        (out_deg, in_deg)
    }

    /// A read view with at most one base edge (and its inverse) hidden.
    pub fn view(&self, exclude: Option<Triplet>) -> GraphView<'_> {
        let exclude = exclude.map(|t| self.canonical(t));
        GraphView { kg: self, exclude }
    }

    /// Rewrites an inverse-relation triplet to its base-relation form.
    pub fn canonical(&self, t: Triplet) -> Triplet {
        if self.space.is_inverse(t.rel) {
            Triplet::new(t.tail, self.space.inverse(t.rel), t.head)
        } else {
            t
        }
    }
}

/// Materialized relation matrix with the excluded cell removed. Hot paths
/// use [`GraphView`] instead of copying.
pub fn adjacency_view(kg: &KnowledgeGraph, rel: RelId, exclude: Option<Triplet>) -> SparseRelationMatrix {
    let view = kg.view(exclude);
    let n = kg.num_entities();
    SparseRelationMatrix::from_cells(n, n, (0..n).flat_map(|i| view.neighbors(rel, i).map(move |j| (i, j))))
}

#[derive(Debug, Clone, Copy)]
pub struct GraphView<'a> {
    kg: &'a KnowledgeGraph,
    exclude: Option<Triplet>,
}

impl<'a> GraphView<'a> {
    pub fn kg(&self) -> &'a KnowledgeGraph {
        self.kg
    }

    pub fn excluded(&self) -> Option<Triplet> {
        self.exclude
    }

    /// The cell hidden in relation `rel`, if any.
    #[inline]
    pub fn skip_cell(&self, rel: RelId) -> Option<(usize, usize)> {
        let t = self.exclude?;
        if rel == t.rel {
            Some((t.head, t.tail))
        } else if rel == self.kg.space.inverse(t.rel) && rel != self.kg.space.self_loop() {
            Some((t.tail, t.head))
        } else {
            None
        }
    }

    pub fn neighbors(&self, rel: RelId, e: EntityId) -> impl Iterator<Item = EntityId> + 'a {
        let skip = self.skip_cell(rel);
        self.kg.adjacency[rel]
            .row(e)
            .iter()
            .map(|&j| j as usize)
            .filter(move |&j| skip != Some((e, j)))
    }

    pub fn contains(&self, rel: RelId, i: EntityId, j: EntityId) -> bool {
        self.skip_cell(rel) != Some((i, j)) && self.kg.adjacency[rel].contains(i, j)
    }
}
