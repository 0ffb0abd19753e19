//! Sentence embeddings: a deterministic feature-hashing embedder, cosine
//! similarity with its 0-to-1 score normalization, and a trainable linear
//! projection fitted on labeled sentence pairs.
//!
//! The projection plays the role of embedding fine-tuning: it is optimized so
//! that same-label pairs score near 0.8 and cross-label pairs near 0.2 under
//! the normalized cosine, while the hashing embedder underneath stays frozen.
//! Externally computed vectors can be swapped in through the `RBEMB1` file
//! format and receive the same treatment.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balance::{FinetunePair, Seed};
use crate::binio::*;
use crate::nnet::{adam_update, matmul_nt, matmul_tn, Tensor, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Embedding dimension used throughout the pipeline.
pub const EMBED_DIM: usize = 768;

/// Mini-batch size for projection training.
const FINETUNE_BATCH: usize = 128;

/// A fixed-size sentence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Embedding {
        Embedding { values }
    }

    pub fn zeros(dim: usize) -> Embedding {
        Embedding {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Errors from embedding math and the embedding file format.
#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cosine of a zero vector is undefined")]
    DegenerateVector,
    #[error("cosine value {0} outside [-1, 1]")]
    ScoreOutOfRange(f64),
    #[error("embedding dimension {got} does not match required {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate sample id {0:?} in embedding file")]
    DuplicateId(String),
    #[error("bad embedding file: {0}")]
    BadFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Hashing embedder ---------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental 64-bit FNV-1a.
struct Fnv(u64);

impl Fnv {
    fn new(tag: u8) -> Fnv {
        let mut h = Fnv(FNV_OFFSET);
        h.byte(tag);
        h
    }

    fn byte(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(FNV_PRIME);
    }

    fn bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.byte(b);
        }
    }

    fn chr(&mut self, c: char) {
        let mut buf = [0u8; 4];
        self.bytes(c.encode_utf8(&mut buf).as_bytes());
    }
}

/// Collapse each maximal asterisk run to a single `*` so the redaction mask
/// contributes one token regardless of the hidden span's length.
fn collapse_mask_runs(sentence: &str) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut in_run = false;
    for c in sentence.chars() {
        if c == '*' {
            if !in_run {
                out.push('*');
                in_run = true;
            }
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}

fn bucket_signed(hash: u64, acc: &mut [f64]) {
    let bucket = (hash % EMBED_DIM as u64) as usize;
    let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
    acc[bucket] += sign;
}

/// Deterministic base embedder: signed feature hashing of character 3-5-grams
/// and word uni/bigrams into 768 buckets, then L2 normalization. The all-zero
/// vector of an empty sentence is the one exception to unit norm.
pub fn embed_base(sentence: &str) -> Embedding {
    let collapsed = collapse_mask_runs(sentence);
    let mut acc = vec![0.0f64; EMBED_DIM];

    let chars: Vec<char> = collapsed.chars().collect();
    for n in 3..=5usize {
        if chars.len() < n {
            break;
        }
        for window in chars.windows(n) {
            let mut h = Fnv::new(b'c');
            for &c in window {
                h.chr(c);
            }
            bucket_signed(h.0, &mut acc);
        }
    }

    let tokens: Vec<&str> = collapsed.split_whitespace().collect();
    for token in &tokens {
        let mut h = Fnv::new(b'w');
        h.bytes(token.as_bytes());
        bucket_signed(h.0, &mut acc);
    }
    for pair in tokens.windows(2) {
        let mut h = Fnv::new(b'b');
        h.bytes(pair[0].as_bytes());
        h.byte(0x1f);
        h.bytes(pair[1].as_bytes());
        bucket_signed(h.0, &mut acc);
    }

    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    Embedding::new(acc)
}

/// Cosine similarity `Σ aᵢbᵢ / (‖a‖‖b‖)`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let (na, nb) = (a.l2_norm(), b.l2_norm());
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::DegenerateVector);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

/// Map a cosine in [-1, 1] onto the 0-to-1 similarity scale: `(c + 1) / 2`.
/// Inputs within 1e-9 of the bounds are accepted and clamped.
pub fn normalize_score(c: f64) -> Result<f64, EmbedError> {
    if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&c) {
        return Err(EmbedError::ScoreOutOfRange(c));
    }
    Ok(((c.clamp(-1.0, 1.0)) + 1.0) / 2.0)
}

// Projection ----------------------------------------------------------------

/// A trainable square matrix applied on top of the base embedder.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub matrix: Tensor,
    pub trained: bool,
}

impl Projection {
    /// Identity projection: output embeddings equal base embeddings.
    pub fn identity(dim: usize) -> Projection {
        Projection {
            matrix: Tensor::identity(dim),
            trained: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[0]
    }

    /// `P · v`; no renormalization since cosine is scale-invariant.
    pub fn apply(&self, embedding: &Embedding) -> Embedding {
        if !self.trained {
            return embedding.clone();
        }
        let dim = self.dim();
        assert_eq!(embedding.dim(), dim, "projection dimension mismatch");
        let mut out = vec![0.0f64; dim];
        for (i, slot) in out.iter_mut().enumerate() {
            let row = &self.matrix.data()[i * dim..(i + 1) * dim];
            *slot = row
                .iter()
                .zip(embedding.values())
                .map(|(w, v)| w * v)
                .sum();
        }
        Embedding::new(out)
    }
}

/// Embed a sentence and apply a projection.
pub fn embed(sentence: &str, projection: &Projection) -> Embedding {
    projection.apply(&embed_base(sentence))
}

/// Result of projection training.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub projection: Projection,
    pub epoch_losses: Vec<f64>,
}

/// Base-embedding triple for one training pair: `(a, b, target score)`.
pub type PairVectors = (Vec<f64>, Vec<f64>, f64);

/// Fit the projection on sentence pairs by minimizing the mean squared error
/// between the normalized projected cosine and the pair target, using Adam.
pub fn finetune(pairs: &[FinetunePair], epochs: usize, lr: f64, seed: Seed) -> FinetuneOutcome {
    let vectors: Vec<PairVectors> = pairs
        .iter()
        .map(|p| {
            (
                embed_base(&p.sample_a.redacted_sentence).values().to_vec(),
                embed_base(&p.sample_b.redacted_sentence).values().to_vec(),
                p.target,
            )
        })
        .collect();
    train_projection(&vectors, EMBED_DIM, epochs, lr, seed)
}

/// The optimization loop behind [`finetune`], usable with any base vectors
/// (imported embeddings, toy dimensions in tests).
pub fn train_projection(
    pairs: &[PairVectors],
    dim: usize,
    epochs: usize,
    lr: f64,
    seed: Seed,
) -> FinetuneOutcome {
    let mut projection = Projection::identity(dim);
    if pairs.is_empty() || epochs == 0 {
        return FinetuneOutcome {
            projection,
            epoch_losses: Vec::new(),
        };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut m = vec![0.0f64; dim * dim];
    let mut v = vec![0.0f64; dim * dim];
    let mut t = 0u64;
    let mut epoch_losses = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(FINETUNE_BATCH) {
            let batch: Vec<&PairVectors> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (loss, grad) = pair_loss_and_grad_batch(&projection.matrix, &batch);
            epoch_loss += loss * batch.len() as f64;
            t += 1;
            adam_update(
                projection.matrix.data_mut(),
                grad.data(),
                &mut m,
                &mut v,
                t,
                lr,
                ADAM_BETA1,
                ADAM_BETA2,
                ADAM_EPS,
            );
        }
        epoch_losses.push(epoch_loss / pairs.len() as f64);
    }
    projection.trained = true;
    FinetuneOutcome {
        projection,
        epoch_losses,
    }
}

/// Mean squared pair loss and its gradient with respect to the projection.
///
/// For each pair: `u = P·a`, `v = P·b`, `s = (cos(u, v) + 1) / 2`,
/// `loss = mean of (s - target)²`. Pairs whose projected vectors vanish are
/// skipped.
pub fn pair_loss_and_grad(matrix: &Tensor, pairs: &[PairVectors]) -> (f64, Tensor) {
    let refs: Vec<&PairVectors> = pairs.iter().collect();
    pair_loss_and_grad_batch(matrix, &refs)
}

fn pair_loss_and_grad_batch(matrix: &Tensor, pairs: &[&PairVectors]) -> (f64, Tensor) {
    let dim = matrix.shape()[0];
    let n = pairs.len();
    let mut a = Tensor::zeros(&[n, dim]);
    let mut b = Tensor::zeros(&[n, dim]);
    for (row, (va, vb, _)) in pairs.iter().enumerate() {
        a.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(va);
        b.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(vb);
    }
    let u = matmul_nt(&a, matrix);
    let v = matmul_nt(&b, matrix);

    let mut gu = Tensor::zeros(&[n, dim]);
    let mut gv = Tensor::zeros(&[n, dim]);
    let mut loss = 0.0;
    let scale = 1.0 / n as f64;
    for (row, pair) in pairs.iter().enumerate() {
        let target = pair.2;
        let ur = &u.data()[row * dim..(row + 1) * dim];
        let vr = &v.data()[row * dim..(row + 1) * dim];
        let nu = ur.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nv = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nu == 0.0 || nv == 0.0 {
            continue;
        }
        let dot: f64 = ur.iter().zip(vr).map(|(x, y)| x * y).sum();
        let c = dot / (nu * nv);
        let s = (c + 1.0) / 2.0;
        let err = s - target;
        loss += err * err * scale;
        // dL/dc = err / n  (the 2 from the square cancels ds/dc = 1/2).
        let dc = err * scale;
        let gu_row = &mut gu.data_mut()[row * dim..(row + 1) * dim];
        for i in 0..dim {
            gu_row[i] = dc * (vr[i] / (nu * nv) - c * ur[i] / (nu * nu));
        }
        let gv_row = &mut gv.data_mut()[row * dim..(row + 1) * dim];
        for i in 0..dim {
            gv_row[i] = dc * (ur[i] / (nu * nv) - c * vr[i] / (nv * nv));
        }
    }

    let mut grad = matmul_tn(&gu, &a);
    let grad_b = matmul_tn(&gv, &b);
    for (g, gb) in grad.data_mut().iter_mut().zip(grad_b.data()) {
        *g += gb;
    }
    (loss, grad)
}

/// Mean same-label score minus mean cross-label score over a pair set; the
/// quantity fine-tuning is meant to widen.
pub fn score_gap(projection: &Projection, pairs: &[FinetunePair]) -> Result<f64, EmbedError> {
    let mut same = (0.0, 0usize);
    let mut cross = (0.0, 0usize);
    for pair in pairs {
        let a = projection.apply(&embed_base(&pair.sample_a.redacted_sentence));
        let b = projection.apply(&embed_base(&pair.sample_b.redacted_sentence));
        let score = normalize_score(cosine(&a, &b)?)?;
        if pair.sample_a.label == pair.sample_b.label {
            same.0 += score;
            same.1 += 1;
        } else {
            cross.0 += score;
            cross.1 += 1;
        }
    }
    Ok(same.0 / same.1.max(1) as f64 - cross.0 / cross.1.max(1) as f64)
}

// Embedding files -----------------------------------------------------------

pub const EMBEDDING_MAGIC: &[u8] = b"RBEMB1";

/// Write embeddings keyed by sample id: magic `RBEMB1`, u32 dimension,
/// u32 count, then per row a u16 id length, the UTF-8 id, and `dim` f32s.
pub fn write_embeddings<'a>(
    rows: impl ExactSizeIterator<Item = (&'a str, &'a Embedding)>,
    dim: usize,
    w: &mut impl Write,
) -> Result<(), EmbedError> {
    w.write_all(EMBEDDING_MAGIC)?;
    write_u32(w, dim as u32)?;
    write_u32(w, rows.len() as u32)?;
    for (id, embedding) in rows {
        if embedding.dim() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: embedding.dim(),
            });
        }
        write_u16(w, id.len() as u16)?;
        w.write_all(id.as_bytes())?;
        for &v in embedding.values() {
            write_f32(w, v as f32)?;
        }
    }
    Ok(())
}

/// Read an embedding file, requiring dimension [`EMBED_DIM`] and unique ids.
/// A zero-length file is an empty map.
pub fn import_embeddings(r: &mut impl Read) -> Result<HashMap<String, Embedding>, EmbedError> {
    let mut first = [0u8; 1];
    match r.read_exact(&mut first) {
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(HashMap::new()),
        Err(e) => return Err(e.into()),
        Ok(()) => {}
    }
    let mut rest_magic = vec![0u8; EMBEDDING_MAGIC.len() - 1];
    r.read_exact(&mut rest_magic)
        .map_err(|_| EmbedError::BadFile("truncated magic".into()))?;
    if first[0] != EMBEDDING_MAGIC[0] || rest_magic != EMBEDDING_MAGIC[1..] {
        return Err(EmbedError::BadFile("missing RBEMB1 magic".into()));
    }
    let dim = read_u32(r)? as usize;
    if dim != EMBED_DIM {
        return Err(EmbedError::DimensionMismatch {
            expected: EMBED_DIM,
            got: dim,
        });
    }
    let count = read_u32(r)? as usize;
    let mut map = HashMap::with_capacity(count);
    for _ in 0..count {
        let id_len = read_u16(r)? as usize;
        let id_bytes = read_exact_vec(r, id_len)?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| EmbedError::BadFile("sample id is not UTF-8".into()))?;
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(read_f32(r)? as f64);
        }
        if map.insert(id.clone(), Embedding::new(values)).is_some() {
            return Err(EmbedError::DuplicateId(id));
        }
    }
    Ok(map)
}

// Projection files ----------------------------------------------------------

pub const PROJECTION_MAGIC: &[u8] = b"RBPJ1";

pub fn save_projection(projection: &Projection, w: &mut impl Write) -> Result<(), EmbedError> {
    w.write_all(PROJECTION_MAGIC)?;
    write_u32(w, projection.dim() as u32)?;
    w.write_all(&[projection.trained as u8])?;
    for &v in projection.matrix.data() {
        write_f32(w, v as f32)?;
    }
    Ok(())
}

pub fn load_projection(r: &mut impl Read) -> Result<Projection, EmbedError> {
    if !expect_magic(r, PROJECTION_MAGIC)? {
        return Err(EmbedError::BadFile("missing RBPJ1 magic".into()));
    }
    let dim = read_u32(r)? as usize;
    let trained = read_u8(r)? != 0;
    let mut matrix = Tensor::zeros(&[dim, dim]);
    for slot in matrix.data_mut() {
        *slot = read_f32(r)? as f64;
    }
    Ok(Projection { matrix, trained })
}
