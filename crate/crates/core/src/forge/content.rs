//! Deterministic synthetic file content.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const JPEG_HEAD: [u8; 20] = [
    0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x10, b'J', b'F', b'I', b'F', 0x00, 0x01, 0x01, 0x00, 0x00, 0x01, 0x00, 0x01, 0x00,
    0x00,
];

const WORDS: &[&str] = &[
    "cluster", "volume", "entry", "stream", "bitmap", "sector", "record", "folder", "image", "offset", "chain",
    "evidence", "the", "of", "and", "a", "to", "in", "is", "file",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContentKind {
    /// JFIF header, byte-stuffed body, FF D9 trailer.
    Jpeg,
    Pdf,
    Text,
    /// Random bytes without 0xFF, so no marker appears by chance.
    Random,
    Zero,
    /// Zeros with a small JPEG placed at an offset that is not
    /// sector aligned.
    EmbeddedJpeg,
}

impl fmt::Display for ContentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContentKind::Jpeg => "jpeg",
            ContentKind::Pdf => "pdf",
            ContentKind::Text => "text",
            ContentKind::Random => "random",
            ContentKind::Zero => "zero",
            ContentKind::EmbeddedJpeg => "embedded-jpeg",
        })
    }
}

impl FromStr for ContentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "jpeg" | "jpg" => ContentKind::Jpeg,
            "pdf" => ContentKind::Pdf,
            "text" | "txt" => ContentKind::Text,
            "random" => ContentKind::Random,
            "zero" => ContentKind::Zero,
            "embedded-jpeg" => ContentKind::EmbeddedJpeg,
            other => return Err(format!("unknown content kind {other:?}")),
        })
    }
}

fn stuffed(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut b = vec![0u8; len];
    rng.fill(&mut b[..]);
    let mut i = 0;
    while i < len {
        if b[i] == 0xFF {
            if i + 1 < len {
                b[i + 1] = 0x00;
                i += 1;
            } else {
                b[i] = 0x00;
            }
        }
        i += 1;
    }
    b
}

fn jpeg(rng: &mut ChaCha8Rng, size: usize) -> Vec<u8> {
    if size < JPEG_HEAD.len() + 2 {
        return JPEG_HEAD[..size.min(2)]
            .iter()
            .copied()
            .chain(std::iter::repeat(0))
            .take(size)
            .collect();
    }
    let mut out = JPEG_HEAD.to_vec();
    out.extend(stuffed(rng, size - JPEG_HEAD.len() - 2));
    out.extend([0xFF, 0xD9]);
    out
}

fn text(rng: &mut ChaCha8Rng, size: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(size + 16);
    let mut col = 0;
    while out.len() < size {
        let w = WORDS[rng.gen_range(0..WORDS.len())];
        out.extend_from_slice(w.as_bytes());
        col += w.len() + 1;
        if col > 70 {
            out.push(b'\n');
            col = 0;
        } else {
            out.push(b' ');
        }
    }
    out.truncate(size);
    out
}

/// Generates exactly `size` bytes of the given kind from `seed`.
pub fn generate(kind: ContentKind, size: u64, seed: u64) -> Vec<u8> {
    let size = size as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        ContentKind::Jpeg => jpeg(&mut rng, size),
        ContentKind::Text => text(&mut rng, size),
        ContentKind::Pdf => {
            let head = b"%PDF-1.4\n";
            let tail = b"\n%%EOF\n";
            if size < head.len() + tail.len() {
                return text(&mut rng, size);
            }
            let mut out = head.to_vec();
            out.extend(text(&mut rng, size - head.len() - tail.len()));
            out.extend_from_slice(tail);
            out
        }
        ContentKind::Random => {
            let mut b = vec![0u8; size];
            rng.fill(&mut b[..]);
            for x in &mut b {
                if *x == 0xFF {
                    *x = 0xFE;
                }
            }
            b
        }
        ContentKind::Zero => vec![0; size],
        ContentKind::EmbeddedJpeg => {
            let mut b = vec![0u8; size];
            let inner = (size / 2).min(4096);
            let at = (size / 3) | 1;
            if inner >= JPEG_HEAD.len() + 2 && at + inner <= size {
                b[at..at + inner].copy_from_slice(&jpeg(&mut rng, inner));
            }
            b
        }
    }
}
