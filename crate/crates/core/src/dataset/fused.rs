//! On-disk format for fused two-channel samples.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"ROPF"
//! version u16 (currently 1)
//! width   u32
//! height  u32
//! count   u8  (channels; 2 for fused samples)
//! data    count * width * height * f32, channels in order, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const FUSED_MAGIC: [u8; 4] = *b"ROPF";
pub const FUSED_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum FusedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected {FUSED_MAGIC:?}")]
    BadMagic { path: String, found: [u8; 4] },

    #[error("{path}: unsupported format version {found}")]
    UnsupportedVersion { path: String, found: u16 },

    #[error("{path}: unsupported channel count {found}, expected 2")]
    UnsupportedChannels { path: String, found: u8 },

    #[error("{path}: dimensions {width}x{height} are invalid or overflow")]
    BadDimensions {
        path: String,
        width: u32,
        height: u32,
    },

    #[error("{path}: file truncated")]
    Truncated { path: String },

    #[error("{path}: trailing bytes after sample data")]
    TrailingData { path: String },

    #[error("sample buffers hold {ch0} and {ch1} values, expected {expected}")]
    ChannelSize {
        expected: usize,
        ch0: usize,
        ch1: usize,
    },
}

/// Two-channel sample: standardized image values and a 0.0/1.0 mask
/// channel, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSample {
    pub width: u32,
    pub height: u32,
    pub channel0: Vec<f32>,
    pub channel1: Vec<f32>,
}

impl FusedSample {
    fn check(&self) -> Result<(), FusedError> {
        let expected = self.width as usize * self.height as usize;
        if self.channel0.len() != expected || self.channel1.len() != expected {
            return Err(FusedError::ChannelSize {
                expected,
                ch0: self.channel0.len(),
                ch1: self.channel1.len(),
            });
        }
        Ok(())
    }
}

/// Writes a sample; the file round-trips bit-exactly through [`read_fused`].
pub fn write_fused(sample: &FusedSample, path: &Path) -> Result<(), FusedError> {
    sample.check()?;
    let io_err = |source| FusedError::Io {
        path: path.display().to_string(),
        source,
    };

    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    writer.write_all(&FUSED_MAGIC).map_err(io_err)?;
    writer.write_all(&FUSED_VERSION.to_le_bytes()).map_err(io_err)?;
    writer.write_all(&sample.width.to_le_bytes()).map_err(io_err)?;
    writer.write_all(&sample.height.to_le_bytes()).map_err(io_err)?;
    writer.write_all(&[2u8]).map_err(io_err)?;
    for channel in [&sample.channel0, &sample.channel1] {
        for value in channel {
            writer.write_all(&value.to_le_bytes()).map_err(io_err)?;
        }
    }
    writer.flush().map_err(io_err)
}

pub fn read_fused(path: &Path) -> Result<FusedSample, FusedError> {
    let display = || path.display().to_string();
    let file = File::open(path).map_err(|source| FusedError::Io {
        path: display(),
        source,
    })?;
    let mut reader = BufReader::new(file);

    let mut header = [0u8; 15];
    read_exact(&mut reader, &mut header, path)?;
    let magic: [u8; 4] = header[0..4].try_into().expect("fixed slice");
    if magic != FUSED_MAGIC {
        return Err(FusedError::BadMagic {
            path: display(),
            found: magic,
        });
    }
    let version = u16::from_le_bytes(header[4..6].try_into().expect("fixed slice"));
    if version != FUSED_VERSION {
        return Err(FusedError::UnsupportedVersion {
            path: display(),
            found: version,
        });
    }
    let width = u32::from_le_bytes(header[6..10].try_into().expect("fixed slice"));
    let height = u32::from_le_bytes(header[10..14].try_into().expect("fixed slice"));
    let channels = header[14];
    if channels != 2 {
        return Err(FusedError::UnsupportedChannels {
            path: display(),
            found: channels,
        });
    }
    let pixels = (width as u64)
        .checked_mul(height as u64)
        .filter(|&n| n > 0 && n <= usize::MAX as u64 / 8)
        .ok_or_else(|| FusedError::BadDimensions {
            path: display(),
            width,
            height,
        })? as usize;

    let read_channel = |reader: &mut BufReader<File>| -> Result<Vec<f32>, FusedError> {
        let mut buf = vec![0u8; pixels * 4];
        read_exact(reader, &mut buf, path)?;
        Ok(buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("fixed chunk")))
            .collect())
    };
    let channel0 = read_channel(&mut reader)?;
    let channel1 = read_channel(&mut reader)?;

    let mut probe = [0u8; 1];
    match reader.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(FusedError::TrailingData { path: display() });
        }
        Err(source) => {
            return Err(FusedError::Io {
                path: display(),
                source,
            });
        }
    }

    Ok(FusedSample {
        width,
        height,
        channel0,
        channel1,
    })
}

fn read_exact(reader: &mut BufReader<File>, buf: &mut [u8], path: &Path) -> Result<(), FusedError> {
    reader.read_exact(buf).map_err(|source| {
        if source.kind() == std::io::ErrorKind::UnexpectedEof {
            FusedError::Truncated {
                path: path.display().to_string(),
            }
        } else {
            FusedError::Io {
                path: path.display().to_string(),
                source,
            }
        }
    })
}
