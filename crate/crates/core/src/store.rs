//! Binary sequence store.
//!
//! Layout (all integers and doubles little-endian):
//!
//! ```text
//! magic      4 bytes   "SEQS" (or "WAVE" for waveform dumps)
//! version    u16       = 1
//! pol_count  u8
//! n          u32       symbols per block per polarization
//! blocks     u32
//! power      f64       selection power, mW
//! gamma      f64       threshold γ_λ
//! n_proposed u64
//! n_accepted u64
//! [fs        f64]      sampling rate in GHz, "WAVE" only
//! data       blocks × pol_count × n × (re f64, im f64), polarization-major per block
//! ```

use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signal::{SymbolSequence, Waveform, C64};

pub const SEQS_MAGIC: &[u8; 4] = b"SEQS";
pub const WAVE_MAGIC: &[u8; 4] = b"WAVE";
pub const STORE_VERSION: u16 = 1;

/// Accepted blocks plus the bookkeeping of the selection run that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStore {
    pub pol_count: usize,
    pub block_len: usize,
    pub selection_power: f64,
    pub gamma_lambda: f64,
    pub n_proposed: u64,
    pub n_accepted: u64,
    pub blocks: Vec<SymbolSequence>,
}

struct Header {
    pol_count: u8,
    n: u32,
    blocks: u32,
    power: f64,
    gamma: f64,
    n_proposed: u64,
    n_accepted: u64,
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], h: &Header) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&STORE_VERSION.to_le_bytes())?;
    w.write_all(&[h.pol_count])?;
    w.write_all(&h.n.to_le_bytes())?;
    w.write_all(&h.blocks.to_le_bytes())?;
    w.write_all(&h.power.to_le_bytes())?;
    w.write_all(&h.gamma.to_le_bytes())?;
    w.write_all(&h.n_proposed.to_le_bytes())?;
    w.write_all(&h.n_accepted.to_le_bytes())?;
    Ok(())
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(buf)
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<Header> {
    let m: [u8; 4] = read_array(r)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u16::from_le_bytes(read_array(r)?);
    if version != STORE_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let [pol_count] = read_array::<_, 1>(r)?;
    Ok(Header {
        pol_count,
        n: u32::from_le_bytes(read_array(r)?),
        blocks: u32::from_le_bytes(read_array(r)?),
        power: f64::from_le_bytes(read_array(r)?),
        gamma: f64::from_le_bytes(read_array(r)?),
        n_proposed: u64::from_le_bytes(read_array(r)?),
        n_accepted: u64::from_le_bytes(read_array(r)?),
    })
}

fn write_samples<W: Write>(w: &mut W, data: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 16);
    for z in data {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_samples<R: Read>(r: &mut R, n: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; n * 16];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            C64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

fn check_pol_count(pc: u8) -> Result<usize> {
    match pc {
        1 | 2 => Ok(pc as usize),
        _ => Err(Error::Format(format!("pol_count {pc} not in {{1,2}}"))),
    }
}

impl SequenceStore {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.pol_count) || self.block_len == 0 {
            return Err(Error::Format("invalid pol_count or block length".into()));
        }
        if self.n_accepted > self.n_proposed {
            return Err(Error::Format("n_accepted exceeds n_proposed".into()));
        }
        for b in &self.blocks {
            if b.pol_count() != self.pol_count || b.len() != self.block_len {
                return Err(Error::Shape("store block shape differs from header".into()));
            }
        }
        Ok(())
    }

    /// Realized acceptance rate `N_a / N_p`.
    pub fn eta(&self) -> f64 {
        self.n_accepted as f64 / self.n_proposed as f64
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        self.validate()?;
        let h = Header {
            pol_count: self.pol_count as u8,
            n: u32::try_from(self.block_len).map_err(|_| Error::Format("block too long".into()))?,
            blocks: u32::try_from(self.blocks.len()).map_err(|_| Error::Format("too many blocks".into()))?,
            power: self.selection_power,
            gamma: self.gamma_lambda,
            n_proposed: self.n_proposed,
            n_accepted: self.n_accepted,
        };
        write_header(w, SEQS_MAGIC, &h)?;
        for b in &self.blocks {
            for p in b.pols() {
                write_samples(w, p)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let h = read_header(r, SEQS_MAGIC)?;
        let pol_count = check_pol_count(h.pol_count)?;
        let n = h.n as usize;
        if n == 0 {
            return Err(Error::Format("zero block length".into()));
        }
        let mut blocks = Vec::with_capacity(h.blocks as usize);
        for _ in 0..h.blocks {
            let pols = (0..pol_count)
                .map(|_| read_samples(r, n))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(SymbolSequence::new(pols)?);
        }
        let store = Self {
            pol_count,
            block_len: n,
            selection_power: h.power,
            gamma_lambda: h.gamma,
            n_proposed: h.n_proposed,
            n_accepted: h.n_accepted,
            blocks,
        };
        store.validate()?;
        Ok(store)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(checksum(&bytes))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let store = Self::read_from(&mut bytes.as_slice())?;
        Ok((store, checksum(&bytes)))
    }
}

/// SHA-256 of a byte buffer, lowercase hex.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes a waveform as a single-block "WAVE" record.
pub fn write_waveform<W: Write>(w: &mut W, wave: &Waveform) -> Result<()> {
    let h = Header {
        pol_count: wave.pol_count() as u8,
        n: u32::try_from(wave.len()).map_err(|_| Error::Format("waveform too long".into()))?,
        blocks: 1,
        power: wave.mean_power(),
        gamma: f64::INFINITY,
        n_proposed: 1,
        n_accepted: 1,
    };
    write_header(w, WAVE_MAGIC, &h)?;
    w.write_all(&wave.sampling_rate.to_le_bytes())?;
    for p in wave.pols() {
        write_samples(w, p)?;
    }
    Ok(())
}

pub fn read_waveform<R: Read>(r: &mut R) -> Result<Waveform> {
    let h = read_header(r, WAVE_MAGIC)?;
    let pol_count = check_pol_count(h.pol_count)?;
    let fs = f64::from_le_bytes(read_array(r)?);
    if h.blocks != 1 {
        return Err(Error::Format("waveform dump must hold one block".into()));
    }
    let pols = (0..pol_count)
        .map(|_| read_samples(r, h.n as usize))
        .collect::<Result<Vec<_>>>()?;
    Waveform::new(pols, fs, 0.0)
}
