//! Loadable program images.
//!
//! An image is a flat big-endian byte stream: a three-word header (entry
//! pc, initial stack pointer, payload length in words) followed by the
//! payload, which is loaded starting at address zero.

use thiserror::Error;

use super::Memory;

pub const DEFAULT_STACK_TOP: u32 = 0x0010_0000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProgramImage {
    pub entry: u32,
    pub initial_sp: u32,
    pub words: Vec<u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image is {0} bytes; need at least a 12-byte header")]
    TooShort(usize),
    #[error("image length {0} is not a whole number of words")]
    RaggedLength(usize),
    #[error("header claims {claimed} payload words but {present} are present")]
    LengthMismatch { claimed: u32, present: u32 },
}

impl ProgramImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(12 + 4 * self.words.len());
        for header in [self.entry, self.initial_sp, self.words.len() as u32] {
            bytes.extend_from_slice(&header.to_be_bytes());
        }
        for word in &self.words {
            bytes.extend_from_slice(&word.to_be_bytes());
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ProgramImage, ImageError> {
        if !bytes.len().is_multiple_of(4) {
            return Err(ImageError::RaggedLength(bytes.len()));
        }
        if bytes.len() < 12 {
            return Err(ImageError::TooShort(bytes.len()));
        }
        let word_at = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let claimed = word_at(2);
        let present = (bytes.len() / 4 - 3) as u32;
        if claimed != present {
            return Err(ImageError::LengthMismatch { claimed, present });
        }
        Ok(ProgramImage {
            entry: word_at(0),
            initial_sp: word_at(1),
            words: (0..present as usize).map(|i| word_at(3 + i)).collect(),
        })
    }

    /// Place the payload at address zero.
    pub fn load_into(&self, mem: &mut Memory) {
        for (i, &word) in self.words.iter().enumerate() {
            mem.store_word(4 * i as u32, word);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ProgramImage {
        ProgramImage {
            entry: 8,
            initial_sp: DEFAULT_STACK_TOP,
            words: vec![0xf800_0000, 0x1234_5678, 0],
        }
    }

    #[test]
    fn byte_round_trip() {
        let img = sample();
        assert_eq!(ProgramImage::from_bytes(&img.to_bytes()), Ok(img));
    }

    #[test]
    fn header_length_is_validated() {
        let mut bytes = sample().to_bytes();
        bytes.truncate(bytes.len() - 4);
        assert_eq!(
            ProgramImage::from_bytes(&bytes),
            Err(ImageError::LengthMismatch { claimed: 3, present: 2 })
        );
        assert_eq!(ProgramImage::from_bytes(&bytes[..7]), Err(ImageError::RaggedLength(7)));
        assert_eq!(ProgramImage::from_bytes(&bytes[..8]), Err(ImageError::TooShort(8)));
    }

    #[test]
    fn load_places_words_from_address_zero() {
        let img = sample();
        let mut mem = Memory::new();
        img.load_into(&mut mem);
        assert_eq!(mem.load_word(0), 0xf800_0000);
        assert_eq!(mem.load_word(4), 0x1234_5678);
        assert_eq!(mem.load_word(8), 0);
    }
}
