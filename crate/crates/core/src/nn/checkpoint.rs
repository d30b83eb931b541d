//! Binary parameter files.
//!
//! Layout (all little-endian): `b"LDNN"`, `u32` version, `u32` parameter
//! count, then one record per parameter: `u32` name length, name bytes,
//! `u32` rank, `rank × u32` dims, binary32 payload. After the parameters comes
//! `u32` optimizer flag; when set it is followed by `u64` step, four `f64`
//! hyperparameters (lr, β1, β2, ε), `u32` record count and the moment records
//! in the same layout, named `m/<param>` and `v/<param>`.

use std::path::Path;

use super::{AdamConfig, AdamState, NnError, ParamStore, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LDNN";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore<f32>,
    pub adam: Option<AdamState<f32>>,
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            put_record(&mut out, name, t);
        }
        match &self.adam {
            None => out.extend_from_slice(&0u32.to_le_bytes()),
            Some(st) => {
                out.extend_from_slice(&1u32.to_le_bytes());
                out.extend_from_slice(&st.t.to_le_bytes());
                for h in [st.config.lr, st.config.beta1, st.config.beta2, st.config.eps] {
                    out.extend_from_slice(&h.to_le_bytes());
                }
                out.extend_from_slice(&((st.m.len() + st.v.len()) as u32).to_le_bytes());
                for (i, (name, _)) in self.params.iter().enumerate() {
                    put_record(&mut out, &format!("m/{name}"), &st.m[i]);
                    put_record(&mut out, &format!("v/{name}"), &st.v[i]);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let (name, t) = r.record()?;
            if params.index_of(&name).is_some() {
                return Err(NnError::Checkpoint(format!("duplicate parameter {name}")));
            }
            params.insert(name, t);
        }
        let adam = match r.u32()? {
            0 => None,
            1 => {
                let t = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                let mut h = [0.0f64; 4];
                for x in &mut h {
                    *x = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                }
                let records = r.u32()? as usize;
                if records != 2 * params.len() {
                    return Err(NnError::Checkpoint(format!("{records} moment records for {} parameters", params.len())));
                }
                let (mut m, mut v) = (Vec::new(), Vec::new());
                for (i, (pname, p)) in params.iter().enumerate() {
                    for (prefix, dst) in [("m/", &mut m), ("v/", &mut v)] {
                        let (name, t) = r.record()?;
                        if name != format!("{prefix}{pname}") || t.shape() != p.shape() {
                            return Err(NnError::Checkpoint(format!("moment record {name} does not match parameter {i} ({pname})")));
                        }
                        dst.push(t);
                    }
                }
                Some(AdamState {
                    config: AdamConfig {
                        lr: h[0],
                        beta1: h[1],
                        beta2: h[2],
                        eps: h[3],
                    },
                    t,
                    m,
                    v,
                })
            }
            f => return Err(NnError::Checkpoint(format!("bad optimizer flag {f}"))),
        };
        if r.pos != bytes.len() {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { params, adam })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn record(&mut self) -> Result<(String, Tensor<f32>), NnError> {
        let len = self.u32()? as usize;
        let name = String::from_utf8(self.take(len)?.to_vec()).map_err(|_| NnError::Checkpoint("non-utf8 name".into()))?;
        let rank = self.u32()? as usize;
        if rank > 4 {
            return Err(NnError::Checkpoint(format!("rank {rank} for {name}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("oversized tensor".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        Ok((name, Tensor::from_vec(&shape, data)?))
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    let bytes = std::fs::read(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}
