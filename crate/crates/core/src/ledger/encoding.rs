//! Canonical commitment payload and its SHA3-256 digest.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0x01                      version
//! u32                       m, number of samples
//! m x u16                   votes, 0xFFFF = abstain
//! u32                       |C|, number of classes
//! |C| x u32                 label counts
//! 32 bytes                  salt
//! ```

use sha3::{Digest, Sha3_256};

use super::LedgerError;
use crate::mechanism::{LabelCount, Vote};

pub const ENCODING_VERSION: u8 = 0x01;
pub const ABSTAIN_CODE: u16 = 0xFFFF;
/// Largest class count whose indices stay clear of the abstain code.
pub const MAX_CLASSES: usize = 65_534;

pub type Salt = [u8; 32];
pub type Digest32 = [u8; 32];

pub fn canonical_encode(votes: &[Vote], label_count: &LabelCount, salt: &Salt) -> Result<Vec<u8>, LedgerError> {
    let n_classes = label_count.n_classes();
    if n_classes > MAX_CLASSES {
        return Err(LedgerError::EncodingRange(format!("{n_classes} classes exceeds {MAX_CLASSES}")));
    }
    let m = u32::try_from(votes.len())
        .map_err(|_| LedgerError::EncodingRange(format!("{} samples exceeds u32", votes.len())))?;

    let mut out = Vec::with_capacity(1 + 4 + 2 * votes.len() + 4 + 4 * n_classes + 32);
    out.push(ENCODING_VERSION);
    out.extend_from_slice(&m.to_le_bytes());
    for vote in votes {
        let code = match vote {
            Vote::Label(c) if c.index() < MAX_CLASSES => c.0,
            Vote::Label(c) => {
                return Err(LedgerError::EncodingRange(format!("class {c} collides with abstain code")))
            }
            Vote::Abstain => ABSTAIN_CODE,
        };
        out.extend_from_slice(&code.to_le_bytes());
    }
    out.extend_from_slice(&(n_classes as u32).to_le_bytes());
    for &count in label_count.as_slice() {
        let count = u32::try_from(count)
            .map_err(|_| LedgerError::EncodingRange(format!("label count {count} exceeds u32")))?;
        out.extend_from_slice(&count.to_le_bytes());
    }
    out.extend_from_slice(salt);
    Ok(out)
}

pub fn sha3_256(bytes: &[u8]) -> Digest32 {
    Sha3_256::digest(bytes).into()
}

/// `SHA3-256(canonical_encode(votes, label_count, salt))`
pub fn commitment_hash(votes: &[Vote], label_count: &LabelCount, salt: &Salt) -> Result<Digest32, LedgerError> {
    Ok(sha3_256(&canonical_encode(votes, label_count, salt)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_assembled_layout() {
        let bytes = canonical_encode(&[Vote::of(0), Vote::Abstain], &LabelCount(vec![1, 0]), &[0; 32]).unwrap();
        let mut expected = hex::decode("01020000000000ffff020000000100000000000000").unwrap();
        expected.extend_from_slice(&[0; 32]);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn deterministic_and_salt_sensitive() {
        let votes = [Vote::of(3), Vote::of(1), Vote::Abstain];
        let counts = LabelCount(vec![0, 1, 0, 1]);
        let a = canonical_encode(&votes, &counts, &[7; 32]).unwrap();
        assert_eq!(a, canonical_encode(&votes, &counts, &[7; 32]).unwrap());
        let mut salt = [7; 32];
        salt[31] = 8;
        assert_ne!(a, canonical_encode(&votes, &counts, &salt).unwrap());
    }

    #[test]
    fn sha3_known_answers() {
        // FIPS 202 test vectors.
        assert_eq!(
            hex::encode(sha3_256(b"")),
            "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
        );
        assert_eq!(
            hex::encode(sha3_256(b"abc")),
            "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532"
        );
    }

    #[test]
    fn range_errors() {
        let too_many = LabelCount(vec![0; MAX_CLASSES + 1]);
        assert!(matches!(canonical_encode(&[], &too_many, &[0; 32]), Err(LedgerError::EncodingRange(_))));
        let big = LabelCount(vec![u64::from(u32::MAX) + 1]);
        assert!(canonical_encode(&[], &big, &[0; 32]).is_err());
        assert!(canonical_encode(&[Vote::of(0xFFFF)], &LabelCount(vec![0]), &[0; 32]).is_err());
    }
}
