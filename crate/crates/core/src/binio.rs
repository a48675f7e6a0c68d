//! Little-endian helpers shared by the binary artifact formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{file}: bad magic, expected {expected:?}")]
    BadMagic { file: String, expected: String },
    #[error("{file}: unsupported version {version}")]
    Version { file: String, version: u32 },
    #[error("{file}: {message}")]
    Corrupt { file: String, message: String },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: io::Error,
    },
}

impl FormatError {
    pub fn corrupt(file: &str, message: impl Into<String>) -> Self {
        FormatError::Corrupt {
            file: file.to_string(),
            message: message.into(),
        }
    }

    pub fn io(file: &str, source: io::Error) -> Self {
        FormatError::Io {
            file: file.to_string(),
            source,
        }
    }

    /// Replace the file label, used when a reader was given a placeholder.
    pub fn with_file(self, name: &str) -> Self {
        let file = name.to_string();
        match self {
            FormatError::BadMagic { expected, .. } => FormatError::BadMagic { file, expected },
            FormatError::Version { version, .. } => FormatError::Version { file, version },
            FormatError::Corrupt { message, .. } => FormatError::Corrupt { file, message },
            FormatError::Io { source, .. } => FormatError::Io { file, source },
        }
    }
}

pub(crate) fn expect_magic<R: Read>(
    r: &mut R,
    magic: &[u8; 4],
    file: &str,
) -> Result<(), FormatError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| FormatError::io(file, e))?;
    if &buf != magic {
        return Err(FormatError::BadMagic {
            file: file.to_string(),
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    Ok(())
}

pub(crate) fn expect_version<R: Read>(
    r: &mut R,
    version: u32,
    file: &str,
) -> Result<(), FormatError> {
    let v = read_u32(r, file)?;
    if v != version {
        return Err(FormatError::Version {
            file: file.to_string(),
            version: v,
        });
    }
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R, file: &str) -> Result<u32, FormatError> {
    r.read_u32::<LittleEndian>()
        .map_err(|e| FormatError::io(file, e))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, file: &str) -> Result<u64, FormatError> {
    r.read_u64::<LittleEndian>()
        .map_err(|e| FormatError::io(file, e))
}

pub(crate) fn read_f32s<R: Read>(r: &mut R, n: usize, file: &str) -> Result<Vec<f32>, FormatError> {
    let mut out = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut out)
        .map_err(|e| FormatError::io(file, e))?;
    Ok(out)
}

pub(crate) fn read_string<R: Read>(r: &mut R, file: &str) -> Result<String, FormatError> {
    let len = read_u32(r, file)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|e| FormatError::io(file, e))?;
    String::from_utf8(buf)
        .map_err(|_| FormatError::corrupt(file, "string table entry is not UTF-8"))
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_u32::<LittleEndian>(v)
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_u64::<LittleEndian>(v)
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn write_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

/// Reject element counts that cannot fit in the remaining input.
pub(crate) fn checked_len(
    count: u64,
    elem_bytes: u64,
    remaining: Option<u64>,
    file: &str,
) -> Result<usize, FormatError> {
    let bytes = count
        .checked_mul(elem_bytes)
        .ok_or_else(|| FormatError::corrupt(file, "size overflow"))?;
    if let Some(rem) = remaining {
        if bytes > rem {
            return Err(FormatError::corrupt(
                file,
                "declared size exceeds file length",
            ));
        }
    }
    usize::try_from(count).map_err(|_| FormatError::corrupt(file, "size overflow"))
}
