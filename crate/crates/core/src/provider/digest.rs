use std::fmt;

use sha2::{Digest as _, Sha256};

use super::{ChatRequest, ImageGenRequest, Part, Role};

/// SHA-256 of a canonical, length-prefixed encoding of a request.
///
/// Every string and byte payload is written as a little-endian `u64` length
/// followed by its bytes, so no two distinct requests share an encoding.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Digest(Sha256::digest(bytes).into())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

struct Canon(Sha256);

impl Canon {
    fn new(domain: &str) -> Self {
        let mut c = Canon(Sha256::new());
        c.bytes(domain.as_bytes());
        c
    }

    fn bytes(&mut self, b: &[u8]) {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
    }

    fn tag(&mut self, t: u8) {
        self.0.update([t]);
    }

    fn u64(&mut self, v: u64) {
        self.0.update(v.to_le_bytes());
    }

    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            None => self.tag(0),
            Some(x) => {
                self.tag(1);
                self.u64(x.to_bits());
            }
        }
    }

    fn finish(self) -> Digest {
        Digest(self.0.finalize().into())
    }
}

pub(super) fn chat_digest(req: &ChatRequest) -> Digest {
    let mut c = Canon::new("forge/chat/v1");
    c.bytes(req.system_prompt.as_bytes());
    c.u64(req.turns.len() as u64);
    for turn in &req.turns {
        c.tag(match turn.role {
            Role::User => b'u',
            Role::Assistant => b'a',
        });
        c.u64(turn.parts.len() as u64);
        for part in &turn.parts {
            match part {
                Part::Text(t) => {
                    c.tag(b't');
                    c.bytes(t.as_bytes());
                }
                Part::Image(img) => {
                    c.tag(b'i');
                    c.bytes(img.media_type().mime().as_bytes());
                    c.bytes(img.bytes());
                }
            }
        }
    }
    c.bytes(req.sampling.model_id.as_bytes());
    c.opt_f64(req.sampling.temperature);
    c.opt_f64(req.sampling.top_p);
    c.u64(u64::from(req.attempt));
    c.finish()
}

pub(super) fn image_digest(req: &ImageGenRequest) -> Digest {
    let mut c = Canon::new("forge/image/v1");
    c.bytes(req.prompt.as_bytes());
    c.u64(u64::from(req.size.0));
    c.u64(u64::from(req.size.1));
    c.bytes(req.model_id.as_bytes());
    c.u64(u64::from(req.attempt));
    c.finish()
}
