//! Stable 64-bit fingerprints for predictors, messages and trace records.

use sha2::{Digest, Sha256};

/// Incremental hasher producing stable fingerprints independent of platform
/// and `Hash` implementation details.
#[derive(Clone, Default)]
pub struct Fingerprinter {
    inner: Sha256,
}

impl Fingerprinter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.inner.update(bytes);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn f64s(&mut self, vs: &[f64]) -> &mut Self {
        self.u64(vs.len() as u64);
        for v in vs {
            self.f64(*v);
        }
        self
    }

    /// Full 32-byte digest.
    pub fn finish_bytes(self) -> [u8; 32] {
        self.inner.finalize().into()
    }

    /// First eight bytes of the digest as a little-endian integer.
    pub fn finish(self) -> u64 {
        let d = self.finish_bytes();
        let mut b = [0u8; 8];
        b.copy_from_slice(&d[..8]);
        u64::from_le_bytes(b)
    }
}

/// Values that can be folded into a trace digest.
pub trait Fingerprint {
    fn fingerprint(&self, f: &mut Fingerprinter);

    fn fingerprint_u64(&self) -> u64 {
        let mut f = Fingerprinter::new();
        self.fingerprint(&mut f);
        f.finish()
    }
}

impl Fingerprint for () {
    fn fingerprint(&self, _: &mut Fingerprinter) {}
}
