//! Versioned binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  b"STAGMODL"
//! version    u32      currently 1
//! d          u64      weight-vector length
//! T          u64      alphabet size
//! alphabet   T x (len: u64, UTF-8 bytes)
//! window     u32
//! hash_bits  u32
//! hash_seed  u64
//! weights    d x f64
//! ```
//!
//! The stored dimension must equal the one implied by `(hash_bits, T)`;
//! a mismatch means the file was produced by an incompatible feature
//! scheme and loading fails rather than mis-scoring silently.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use smoothinfer::TaggingFeatures;

pub const MAGIC: &[u8; 8] = b"STAGMODL";
pub const VERSION: u32 = 1;

pub fn save_model(path: &Path, features: &TaggingFeatures, w: &[f64]) -> Result<(), String> {
    if w.len() != features.dim() {
        return Err(format!(
            "weight vector has length {}, feature dimension is {}",
            w.len(),
            features.dim()
        ));
    }
    let file = File::create(path)
        .map_err(|e| format!("cannot create model file {}: {e}", path.display()))?;
    let mut out = BufWriter::new(file);
    let io = |e: std::io::Error| format!("cannot write model file {}: {e}", path.display());
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(w.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&(features.alphabet.len() as u64).to_le_bytes()).map_err(io)?;
    for tag in &features.alphabet {
        out.write_all(&(tag.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(tag.as_bytes()).map_err(io)?;
    }
    out.write_all(&(features.window as u32).to_le_bytes()).map_err(io)?;
    out.write_all(&features.hash_bits.to_le_bytes()).map_err(io)?;
    out.write_all(&features.hash_seed.to_le_bytes()).map_err(io)?;
    for x in w {
        out.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

struct Reader<R> {
    inner: R,
    path: String,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], String> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| format!("model file {} is truncated or unreadable: {e}", self.path))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String, String> {
        let len = self.u64()? as usize;
        if len > 1 << 20 {
            return Err(format!(
                "model file {}: implausible string length {len}",
                self.path
            ));
        }
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| format!("model file {} is truncated: {e}", self.path))?;
        String::from_utf8(buf)
            .map_err(|_| format!("model file {}: tag is not valid UTF-8", self.path))
    }
}

pub fn load_model(path: &Path) -> Result<(TaggingFeatures, Vec<f64>), String> {
    let file = File::open(path)
        .map_err(|e| format!("cannot open model file {}: {e}", path.display()))?;
    let mut r = Reader { inner: BufReader::new(file), path: path.display().to_string() };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != MAGIC {
        return Err(format!(
            "{} is not a model file (bad magic number)",
            path.display()
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!(
            "model file {} has version {version}, this binary reads version {VERSION}",
            path.display()
        ));
    }
    let d = r.u64()? as usize;
    let t = r.u64()? as usize;
    if t == 0 || t > 1 << 20 {
        return Err(format!("model file {}: implausible alphabet size {t}", path.display()));
    }
    let alphabet: Vec<String> = (0..t).map(|_| r.string()).collect::<Result<_, _>>()?;
    let window = r.u32()? as usize;
    let hash_bits = r.u32()?;
    let hash_seed = r.u64()?;
    let features = TaggingFeatures::from_parts(alphabet, window, hash_bits, hash_seed)
        .map_err(|e| format!("model file {}: {e}", path.display()))?;
    if features.dim() != d {
        return Err(format!(
            "model file {} stores {d} weights but its feature scheme has dimension {}",
            path.display(),
            features.dim()
        ));
    }
    let w: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_, _>>()?;
    let mut trailing = [0u8; 1];
    match r.inner.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => {
            return Err(format!(
                "model file {} has trailing bytes after the weight block",
                path.display()
            ))
        }
        Err(e) => return Err(format!("model file {}: {e}", path.display())),
    }
    Ok((features, w))
}
