//! Little-endian binary framing shared by model and classifier files:
//! 4-byte magic, u16 version, body, trailing CRC32 of everything before it.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("file version {found} is not readable by a version {reader} reader")]
    VersionMismatch { found: u16, reader: u16 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumFailure { stored: u32, computed: u32 },
    #[error("unexpected end of data at byte {0}")]
    Truncated(usize),
    #[error("invalid content: {0}")]
    Invalid(String),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Self::default();
        w.bytes(magic);
        w.u16(version);
        w
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    pub fn u16(&mut self, x: u16) {
        self.bytes(&x.to_le_bytes());
    }

    pub fn u32(&mut self, x: u32) {
        self.bytes(&x.to_le_bytes());
    }

    pub fn u64(&mut self, x: u64) {
        self.bytes(&x.to_le_bytes());
    }

    pub fn f64(&mut self, x: f64) {
        self.bytes(&x.to_le_bytes());
    }

    pub fn len_prefixed_f64(&mut self, xs: impl ExactSizeIterator<Item = f64>) {
        self.u32(xs.len() as u32);
        xs.for_each(|x| self.f64(x));
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    /// Append the CRC32 trailer and return the finished buffer.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    version: u16,
}

impl<'a> Reader<'a> {
    /// Verify the checksum, magic and version, returning a reader positioned
    /// after the header. `reader_version` is the newest format the caller understands.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], reader_version: u16) -> Result<Self> {
        if bytes.len() < 10 {
            return Err(CodecError::Truncated(bytes.len()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(CodecError::ChecksumFailure { stored, computed });
        }
        let found: [u8; 4] = body[..4].try_into().unwrap();
        if &found != magic {
            return Err(CodecError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
        if version == 0 || version > reader_version {
            return Err(CodecError::VersionMismatch {
                found: version,
                reader: reader_version,
            });
        }
        Ok(Self {
            buf: body,
            pos: 6,
            version,
        })
    }

    pub fn version(&self) -> u16 {
        self.version
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.buf.len() - self.pos {
            return Err(CodecError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| CodecError::Invalid("count overflows usize".into()))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(CodecError::Truncated(self.pos));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn len_prefixed_f64(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        self.f64s(n)
    }

    pub fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|e| CodecError::Invalid(e.to_string()))
    }
}
