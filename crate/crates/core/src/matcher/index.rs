use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::embed::{dot, EmbedError, EmbeddingProvider};
use crate::kg::{ClassId, EntityId, KnowledgeGraph, RelationId};

#[derive(Debug, Clone, PartialEq)]
pub struct EntityCandidate {
    pub id: EntityId,
    pub similarity: f32,
    pub classes: BTreeSet<ClassId>,
}

#[derive(Debug, Clone)]
struct EntityEntry {
    id: EntityId,
    classes: BTreeSet<ClassId>,
    vector: Vec<f32>,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("index file I/O: {0}")]
    Io(#[from] io::Error),
    #[error("index file is malformed: {0}")]
    Malformed(String),
    #[error("index was built with embedder `{found}`, current embedder is `{expected}`")]
    Fingerprint { expected: String, found: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dimension: usize,
    entity_count: usize,
    relation_count: usize,
    fingerprint: String,
}

/// Exact cosine index over entity surface names and relation names.
#[derive(Clone)]
pub struct SimilarityIndex {
    embedder: Arc<dyn EmbeddingProvider>,
    entities: Vec<EntityEntry>,
    relations: Vec<(RelationId, Vec<f32>)>,
}

impl std::fmt::Debug for SimilarityIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimilarityIndex")
            .field("embedder", &self.embedder.fingerprint())
            .field("entities", &self.entities.len())
            .field("relations", &self.relations.len())
            .finish()
    }
}

/// Text embedded for an entity: its surface name, or its id when unnamed.
fn entity_text<'a>(id: &'a EntityId, name: &'a str) -> &'a str {
    if name.trim().is_empty() {
        id.as_str()
    } else {
        name
    }
}

/// Sorts by descending similarity, then ascending id.
fn rank<T: Ord>(v: &mut [(T, f32)]) {
    v.sort_by(|(a, x), (b, y)| y.total_cmp(x).then_with(|| a.cmp(b)));
}

impl SimilarityIndex {
    pub fn build(kg: &KnowledgeGraph, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self, EmbedError> {
        let entity_texts: Vec<String> = kg.entities().map(|(id, info)| entity_text(id, &info.name).to_string()).collect();
        let vectors = embedder.embed_batch(&entity_texts)?;
        let entities = kg
            .entities()
            .zip(vectors)
            .map(|((id, info), vector)| EntityEntry {
                id: id.clone(),
                classes: info.classes.clone(),
                vector,
            })
            .collect();
        let rel_ids: Vec<RelationId> = kg.schema_triples().map(|st| st.relation.clone()).collect();
        let rel_texts: Vec<String> = rel_ids.iter().map(|r| r.to_string()).collect();
        let relations = rel_ids.into_iter().zip(embedder.embed_batch(&rel_texts)?).collect();
        Ok(SimilarityIndex {
            embedder,
            entities,
            relations,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn embedder(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embedder
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.embedder.embed(text)
    }

    /// Top-`j` entities by cosine similarity to `mention`.
    pub fn candidate_entities(&self, mention: &str, j: usize) -> Result<Vec<EntityCandidate>, EmbedError> {
        let q = self.embed(mention)?;
        let mut scored: Vec<(usize, f32)> = self.entities.iter().enumerate().map(|(i, e)| (i, dot(&q, &e.vector))).collect();
        scored.sort_by(|(a, x), (b, y)| y.total_cmp(x).then_with(|| self.entities[*a].id.cmp(&self.entities[*b].id)));
        Ok(scored
            .into_iter()
            .take(j)
            .map(|(i, s)| EntityCandidate {
                id: self.entities[i].id.clone(),
                similarity: s,
                classes: self.entities[i].classes.clone(),
            })
            .collect())
    }

    /// Similarity of `mention` to every indexed relation, ranked.
    pub fn relation_scores(&self, mention: &str) -> Result<Vec<(RelationId, f32)>, EmbedError> {
        let q = self.embed(mention)?;
        let mut scored: Vec<(RelationId, f32)> = self.relations.iter().map(|(r, v)| (r.clone(), dot(&q, v))).collect();
        rank(&mut scored);
        Ok(scored)
    }

    pub fn candidate_relations(&self, mention: &str, k: usize) -> Result<Vec<(RelationId, f32)>, EmbedError> {
        let mut all = self.relation_scores(mention)?;
        all.truncate(k);
        Ok(all)
    }

    /// Writes a JSON header line followed by little-endian records of
    /// `u32 id length, id bytes, dimension × f32`; entities first, then
    /// relations.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let mut out = BufWriter::new(File::create(path)?);
        let header = Header {
            dimension: self.embedder.dimension(),
            entity_count: self.entities.len(),
            relation_count: self.relations.len(),
            fingerprint: self.embedder.fingerprint(),
        };
        serde_json::to_writer(&mut out, &header).map_err(|e| IndexError::Malformed(e.to_string()))?;
        out.write_all(b"\n")?;
        let records = self
            .entities
            .iter()
            .map(|e| (e.id.as_str(), &e.vector))
            .chain(self.relations.iter().map(|(r, v)| (r.as_str(), v)));
        for (id, v) in records {
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
            for x in v {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads an index written by [`save`](Self::save). Entity classes are
    /// taken from `kg`; the stored fingerprint must match `embedder`.
    pub fn load(path: &Path, kg: &KnowledgeGraph, embedder: Arc<dyn EmbeddingProvider>) -> Result<Self, IndexError> {
        let mut input = BufReader::new(File::open(path)?);
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line).map_err(|e| IndexError::Malformed(format!("header: {e}")))?;
        if header.fingerprint != embedder.fingerprint() || header.dimension != embedder.dimension() {
            return Err(IndexError::Fingerprint {
                expected: embedder.fingerprint(),
                found: header.fingerprint,
            });
        }
        let mut read_record = || -> Result<(String, Vec<f32>), IndexError> {
            let mut len = [0u8; 4];
            input.read_exact(&mut len)?;
            let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
            input.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|e| IndexError::Malformed(e.to_string()))?;
            let mut v = vec![0f32; header.dimension];
            let mut buf = [0u8; 4];
            for x in v.iter_mut() {
                input.read_exact(&mut buf)?;
                *x = f32::from_le_bytes(buf);
            }
            Ok((id, v))
        };
        let mut entities = Vec::with_capacity(header.entity_count);
        for _ in 0..header.entity_count {
            let (id, vector) = read_record()?;
            let id = EntityId::new(id);
            let info = kg
                .entity(&id)
                .ok_or_else(|| IndexError::Malformed(format!("entity `{id}` is not in the graph")))?;
            entities.push(EntityEntry {
                classes: info.classes.clone(),
                id,
                vector,
            });
        }
        let mut relations = Vec::with_capacity(header.relation_count);
        for _ in 0..header.relation_count {
            let (id, vector) = read_record()?;
            relations.push((RelationId::new(id), vector));
        }
        Ok(SimilarityIndex {
            embedder,
            entities,
            relations,
        })
    }
}

/// Embeds every entity surface name and relation name of `kg`.
pub fn build_index(kg: &KnowledgeGraph, embedder: Arc<dyn EmbeddingProvider>) -> Result<SimilarityIndex, EmbedError> {
    SimilarityIndex::build(kg, embedder)
}
