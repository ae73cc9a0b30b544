//! Binary file formats. All integers and floats are little-endian; floats
//! are IEEE-754 binary64.
//!
//! Feature file (`.rtwf`):
//!
//! ```text
//! magic   b"RTWF"        4 bytes
//! version u32            = 1
//! n       u64            frames
//! d_model u64
//! id_len  u32
//! id      id_len bytes   UTF-8
//! data    n * d_model f64, frame-major
//! ```
//!
//! Reference bank (`.rtwb`):
//!
//! ```text
//! magic   b"RTWB"        4 bytes
//! version u32            = 1
//! samples u64, te_count u64, dim u64, group_size u64, seed u64
//! seed_policy u8 (0 shared, 1 per-sequence), normalize_te u8 (0/1)
//! n_classes u32
//! per class:
//!   label_len u32, label bytes, n_subspaces u32
//!   per subspace:
//!     id_len u32, id bytes
//!     d_te u64, m u64, l u64
//!     singular_values  m f64
//!     basis            d_te * m f64, column-major
//!     te_coeffs        l * m f64, column-major
//! ```
//!
//! Attention weights (`.rtwa`):
//!
//! ```text
//! magic   b"RTWA"        4 bytes
//! version u32            = 1
//! heads u32, d_model u64, d_k u64, d_v u64
//! per head: W_Q (d_model x d_k), W_K (d_model x d_k), W_V (d_model x d_v),
//!           each row-major f64
//! ```
//!
//! Files are rejected on a wrong magic or version, truncation, trailing
//! bytes, or non-finite floats.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::attention::{HeadWeights, SelfAttentionConfig, WeightSource};
use crate::classifier::{BuildConfig, ClassEntry, ReferenceBank, SeedPolicy};
use crate::error::{Result, RtwError};
use crate::sampling::FeatureSequence;
use crate::subspace::HypoSubspace;

pub const FEATURE_MAGIC: &[u8; 4] = b"RTWF";
pub const BANK_MAGIC: &[u8; 4] = b"RTWB";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"RTWA";
pub const FORMAT_VERSION: u32 = 1;
pub const FEATURE_EXTENSION: &str = "rtwf";

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn header(magic: &[u8; 4]) -> Self {
        let mut w = Writer::default();
        w.buf.extend_from_slice(magic);
        w.u32(FORMAT_VERSION);
        w
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn f64s<'a>(&mut self, vals: impl IntoIterator<Item = &'a f64>) {
        for v in vals {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, what };
        if r.take(4)? != magic {
            return Err(r.err("bad magic bytes"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        Ok(r)
    }
    fn err(&self, msg: &str) -> RtwError {
        RtwError::Format(format!("{} at byte {}: {msg}", self.what, self.pos))
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| self.err("length does not fit in memory"))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.err("string is not UTF-8"))
    }
    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| self.err("payload size overflows"))?;
        let raw = self.take(bytes)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(self.err("non-finite value in payload"));
        }
        Ok(vals)
    }
    fn matrix(&mut self, rows: usize, cols: usize, row_major: bool) -> Result<DMatrix<f64>> {
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| self.err("matrix size overflows"))?;
        let vals = self.f64s(count)?;
        Ok(if row_major {
            DMatrix::from_row_slice(rows, cols, &vals)
        } else {
            DMatrix::from_column_slice(rows, cols, &vals)
        })
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(&format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn encode_features(seq: &FeatureSequence) -> Vec<u8> {
    let mut w = Writer::header(FEATURE_MAGIC);
    w.len(seq.len());
    w.len(seq.dim());
    w.str(seq.id());
    w.f64s(seq.as_flat());
    w.buf
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::open(bytes, FEATURE_MAGIC, "feature file")?;
    let n = r.len()?;
    let d = r.len()?;
    let id = r.str()?;
    if n == 0 || d == 0 {
        return Err(r.err("empty sequence header"));
    }
    let data = r.f64s(n.checked_mul(d).ok_or_else(|| r.err("payload size overflows"))?)?;
    r.finish()?;
    FeatureSequence::from_flat(id, d, data)
}

pub fn write_features(path: &Path, seq: &FeatureSequence) -> Result<()> {
    Ok(fs::write(path, encode_features(seq))?)
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    decode_features(&fs::read(path)?).map_err(|e| match e {
        RtwError::Format(m) => RtwError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn encode_bank(bank: &ReferenceBank) -> Vec<u8> {
    let mut w = Writer::header(BANK_MAGIC);
    let c = &bank.config;
    for v in [c.samples, c.te_count, c.dim, c.group_size] {
        w.len(v);
    }
    w.u64(c.seed);
    w.u8(c.seed_policy.code());
    w.u8(u8::from(c.normalize_te));
    w.u32(bank.classes.len() as u32);
    for class in &bank.classes {
        w.str(&class.label);
        w.u32(class.subspaces.len() as u32);
        for s in &class.subspaces {
            w.str(s.source_id());
            w.len(s.te_dim());
            w.len(s.dim());
            w.len(s.te_count());
            w.f64s(s.singular_values());
            w.f64s(s.basis().as_slice());
            w.f64s(s.te_coeffs().as_slice());
        }
    }
    w.buf
}

pub fn decode_bank(bytes: &[u8]) -> Result<ReferenceBank> {
    let mut r = Reader::open(bytes, BANK_MAGIC, "bank file")?;
    let samples = r.len()?;
    let te_count = r.len()?;
    let dim = r.len()?;
    let group_size = r.len()?;
    let seed = r.u64()?;
    let seed_policy = SeedPolicy::from_code(r.u8()?).ok_or_else(|| r.err("unknown seed policy"))?;
    let normalize_te = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(r.err("normalize flag must be 0 or 1")),
    };
    let n_classes = r.u32()?;
    let mut classes = Vec::new();
    for _ in 0..n_classes {
        let label = r.str()?;
        let n_sub = r.u32()?;
        let mut subspaces = Vec::new();
        for _ in 0..n_sub {
            let id = r.str()?;
            let d_te = r.len()?;
            let m = r.len()?;
            let l = r.len()?;
            let sv = r.f64s(m)?;
            let basis = r.matrix(d_te, m, false)?;
            let coeffs = r.matrix(l, m, false)?;
            subspaces.push(
                HypoSubspace::from_parts(basis, sv, coeffs, id)
                    .map_err(|e| r.err(&e.to_string()))?,
            );
        }
        classes.push(ClassEntry { label, subspaces });
    }
    r.finish()?;
    let config = BuildConfig {
        samples,
        te_count,
        dim,
        group_size,
        seed,
        seed_policy,
        normalize_te,
    };
    ReferenceBank::new(classes, config).map_err(|e| RtwError::Format(e.to_string()))
}

pub fn write_bank(path: &Path, bank: &ReferenceBank) -> Result<()> {
    Ok(fs::write(path, encode_bank(bank))?)
}

pub fn read_bank(path: &Path) -> Result<ReferenceBank> {
    decode_bank(&fs::read(path)?)
}

pub fn encode_weights(cfg: &SelfAttentionConfig) -> Vec<u8> {
    let mut w = Writer::header(WEIGHTS_MAGIC);
    w.u32(cfg.heads.len() as u32);
    w.len(cfg.d_model);
    w.len(cfg.d_k);
    w.len(cfg.d_v);
    for h in &cfg.heads {
        for m in [&h.w_q, &h.w_k, &h.w_v] {
            w.f64s(m.transpose().as_slice());
        }
    }
    w.buf
}

pub fn decode_weights(bytes: &[u8]) -> Result<SelfAttentionConfig> {
    let mut r = Reader::open(bytes, WEIGHTS_MAGIC, "attention weights file")?;
    let heads = r.u32()?;
    let d_model = r.len()?;
    let d_k = r.len()?;
    let d_v = r.len()?;
    let mut out = Vec::new();
    for _ in 0..heads {
        out.push(HeadWeights {
            w_q: r.matrix(d_model, d_k, true)?,
            w_k: r.matrix(d_model, d_k, true)?,
            w_v: r.matrix(d_model, d_v, true)?,
        });
    }
    r.finish()?;
    SelfAttentionConfig::new(d_model, d_k, d_v, out, WeightSource::File)
        .map_err(|e| RtwError::Format(e.to_string()))
}

pub fn write_weights(path: &Path, cfg: &SelfAttentionConfig) -> Result<()> {
    Ok(fs::write(path, encode_weights(cfg))?)
}

pub fn read_weights(path: &Path) -> Result<SelfAttentionConfig> {
    decode_weights(&fs::read(path)?)
}

/// A feature file that could not be loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssue {
    pub path: PathBuf,
    pub reason: String,
}

/// Labeled sequences from `dir/<label>/*.rtwf`, labels and files in
/// lexicographic order. Unreadable files are reported, not fatal.
pub fn load_labeled_dir(dir: &Path) -> Result<(Vec<(FeatureSequence, String)>, Vec<LoadIssue>)> {
    let mut items = Vec::new();
    let mut issues = Vec::new();
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    for class_dir in class_dirs {
        let label = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| RtwError::Format(format!("{}: label is not UTF-8", class_dir.display())))?
            .to_owned();
        for path in feature_files(&class_dir)? {
            match read_features(&path) {
                Ok(seq) => items.push((seq, label.clone())),
                Err(e) => issues.push(LoadIssue {
                    path,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok((items, issues))
}

/// Sorted `*.rtwf` files directly inside `dir`.
pub fn feature_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == FEATURE_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// Writes `items` as `dir/<label>/<id>.rtwf`.
pub fn write_labeled_dir(dir: &Path, items: &[(FeatureSequence, String)]) -> Result<()> {
    for (seq, label) in items {
        let class_dir = dir.join(label);
        fs::create_dir_all(&class_dir)?;
        write_features(&class_dir.join(format!("{}.{FEATURE_EXTENSION}", seq.id())), seq)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::build_reference_bank;
    use proptest::prelude::*;

    fn seq(id: &str, n: usize, d: usize) -> FeatureSequence {
        let data = (0..n * d).map(|i| (i as f64 * 0.37).sin() * 1e3).collect();
        FeatureSequence::from_flat(id, d, data).unwrap()
    }

    #[test]
    fn feature_header_layout() {
        let s = FeatureSequence::new("ab", vec![vec![1.0, 2.0]]).unwrap();
        let b = encode_features(&s);
        let mut expected = b"RTWF".to_vec();
        expected.extend(1u32.to_le_bytes());
        expected.extend(1u64.to_le_bytes());
        expected.extend(2u64.to_le_bytes());
        expected.extend(2u32.to_le_bytes());
        expected.extend(b"ab");
        expected.extend(1.0f64.to_le_bytes());
        expected.extend(2.0f64.to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn corrupt_feature_files_are_rejected() {
        let good = encode_features(&seq("x", 3, 2));
        assert!(decode_features(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_features(&extra).is_err());
        let mut magic = good.clone();
        magic[0] = b'X';
        assert!(decode_features(&magic).is_err());
        let mut version = good.clone();
        version[4] = 2;
        assert!(decode_features(&version).is_err());
        let mut nan = good.clone();
        let at = nan.len() - 8;
        nan[at..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_features(&nan).is_err());
    }

    #[test]
    fn bank_round_trip_is_exact() {
        let train: Vec<_> = (0..4)
            .map(|i| (seq(&format!("s{i}"), 10 + i, 3), format!("c{}", i % 2)))
            .collect();
        let config = BuildConfig {
            samples: 4,
            te_count: 7,
            dim: 3,
            group_size: 1,
            seed: 123,
            seed_policy: SeedPolicy::PerSequence,
            normalize_te: true,
        };
        let bank = build_reference_bank(&train, &config).unwrap().bank;
        let bytes = encode_bank(&bank);
        let back = decode_bank(&bytes).unwrap();
        assert_eq!(back, bank);
        assert_eq!(encode_bank(&back), bytes);
        assert!(decode_bank(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn weights_round_trip() {
        let cfg = SelfAttentionConfig::seeded_random(3, 4, 2, 5, 8).unwrap();
        let back = decode_weights(&encode_weights(&cfg)).unwrap();
        assert_eq!(back.heads, cfg.heads);
        assert_eq!(back.source, WeightSource::File);
    }

    #[test]
    fn labeled_directories() {
        let dir = tempfile::tempdir().unwrap();
        let items = vec![
            (seq("b1", 4, 2), "beta".to_owned()),
            (seq("a1", 4, 2), "alpha".to_owned()),
            (seq("a0", 4, 2), "alpha".to_owned()),
        ];
        write_labeled_dir(dir.path(), &items).unwrap();
        fs::write(dir.path().join("alpha").join("broken.rtwf"), b"junk").unwrap();
        fs::write(dir.path().join("alpha").join("notes.txt"), b"ignored").unwrap();
        let (loaded, issues) = load_labeled_dir(dir.path()).unwrap();
        let ids: Vec<(&str, &str)> = loaded.iter().map(|(s, l)| (s.id(), l.as_str())).collect();
        assert_eq!(ids, vec![("a0", "alpha"), ("a1", "alpha"), ("b1", "beta")]);
        assert_eq!(issues.len(), 1);
    }

    proptest! {
        #[test]
        fn feature_round_trip(n in 1usize..20, d in 1usize..6, id in "[a-z0-9_]{0,12}", seed in any::<u64>()) {
            let data: Vec<f64> = (0..n * d)
                .map(|i| f64::from_bits((seed.wrapping_mul(i as u64 + 1) >> 2) | 0x3ff0_0000_0000_0000) - 1.5)
                .collect();
            let s = FeatureSequence::from_flat(id, d, data).unwrap();
            let bytes = encode_features(&s);
            let back = decode_features(&bytes).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(encode_features(&back), bytes);
        }
    }
}
