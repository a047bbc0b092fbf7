//! Chain file format.
//!
//! `CAIC` ‖ version u16 ‖ max_transactions u32 ‖ block_reward u64 ‖
//! genesis balances (u32 count, then length-prefixed account + u64) ‖
//! blocks (u32 count, then per block: u32 record length ‖ record ‖ 64-byte
//! seal) ‖ ledger adjustments (u32 count, then after_height u64 ‖ kind u8 ‖
//! length-prefixed account ‖ amount u64). Integers are big-endian.

use std::collections::BTreeMap;
use std::path::Path;

use super::block::put_str;
use super::{AdjustmentKind, Block, Chain, ChainParams, LedgerAdjustment, Transaction};
use crate::Hash512;

const MAGIC: &[u8; 4] = b"CAIC";
const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("malformed chain file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(msg: impl Into<String>) -> PersistError {
    PersistError::Malformed(msg.into())
}

pub fn encode_chain(chain: &Chain) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_be_bytes());
    out.extend_from_slice(&(chain.params().max_transactions as u32).to_be_bytes());
    out.extend_from_slice(&chain.params().block_reward.to_be_bytes());
    out.extend_from_slice(&(chain.genesis_balances().len() as u32).to_be_bytes());
    for (account, bal) in chain.genesis_balances() {
        put_str(&mut out, account);
        out.extend_from_slice(&bal.to_be_bytes());
    }
    out.extend_from_slice(&(chain.blocks().len() as u32).to_be_bytes());
    for (block, seal) in chain.blocks().iter().zip(chain.seals()) {
        let record = block.record_bytes();
        out.extend_from_slice(&(record.len() as u32).to_be_bytes());
        out.extend_from_slice(&record);
        out.extend_from_slice(seal.as_bytes());
    }
    out.extend_from_slice(&(chain.adjustments().len() as u32).to_be_bytes());
    for adj in chain.adjustments() {
        out.extend_from_slice(&adj.after_height.to_be_bytes());
        out.push(match adj.kind {
            AdjustmentKind::Rent => 0,
            AdjustmentKind::Penalty => 1,
        });
        put_str(&mut out, &adj.account);
        out.extend_from_slice(&adj.amount.to_be_bytes());
    }
    out
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| malformed(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, PersistError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn hash(&mut self) -> Result<Hash512, PersistError> {
        Ok(Hash512::from_slice(self.take(64)?).unwrap())
    }

    pub(crate) fn string(&mut self) -> Result<String, PersistError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| malformed("invalid UTF-8"))
    }

    pub(crate) fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn decode_record(bytes: &[u8]) -> Result<Block, PersistError> {
    let mut r = Reader::new(bytes);
    let prev_hash = r.hash()?;
    let count = r.u32()? as usize;
    if count > bytes.len() / 64 {
        return Err(malformed("transaction count exceeds record"));
    }
    let ids = (0..count).map(|_| r.hash()).collect::<Result<Vec<_>, _>>()?;
    let nonce = r.u64()?;
    let height = r.u64()?;
    let miner = r.string()?;
    let model_digest = r.hash()?;
    let reported_score = f64::from_bits(r.u64()?);
    let problem_id = r.string()?;
    let timestamp = r.u64()?;
    let mut transactions = Vec::with_capacity(count);
    for tx_id in ids {
        let len = r.u32()? as usize;
        let mut body = Reader::new(r.take(len)?);
        let tx = Transaction {
            tx_id,
            sender: body.string()?,
            receiver: body.string()?,
            amount: body.u64()?,
            fee: body.u64()?,
            submitted_at: body.u64()?,
            seq: body.u64()?,
        };
        if !body.done() {
            return Err(malformed("trailing bytes in transaction body"));
        }
        transactions.push(tx);
    }
    if !r.done() {
        return Err(malformed("trailing bytes in block record"));
    }
    Ok(Block {
        height,
        prev_hash,
        transactions,
        nonce,
        miner,
        model_digest,
        reported_score,
        problem_id,
        timestamp,
    })
}

/// Decodes a chain file. The result is not validated; call
/// [`super::validate_chain`].
pub fn decode_chain(bytes: &[u8]) -> Result<Chain, PersistError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let params = ChainParams {
        max_transactions: r.u32()? as usize,
        block_reward: r.u64()?,
    };
    let mut genesis = BTreeMap::new();
    for _ in 0..r.u32()? {
        let account = r.string()?;
        let bal = r.u64()?;
        if genesis.insert(account, bal).is_some() {
            return Err(malformed("duplicate genesis account"));
        }
    }
    let n_blocks = r.u32()? as usize;
    let mut blocks = Vec::new();
    let mut seals = Vec::new();
    for _ in 0..n_blocks {
        let len = r.u32()? as usize;
        blocks.push(decode_record(r.take(len)?)?);
        seals.push(r.hash()?);
    }
    let mut adjustments = Vec::new();
    for _ in 0..r.u32()? {
        let after_height = r.u64()?;
        let kind = match r.u8()? {
            0 => AdjustmentKind::Rent,
            1 => AdjustmentKind::Penalty,
            k => return Err(malformed(format!("unknown adjustment kind {k}"))),
        };
        adjustments.push(LedgerAdjustment {
            after_height,
            kind,
            account: r.string()?,
            amount: r.u64()?,
        });
    }
    if !r.done() {
        return Err(malformed("trailing bytes"));
    }
    Ok(Chain::from_parts(params, genesis, blocks, seals, adjustments))
}

pub fn save_chain(chain: &Chain, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, encode_chain(chain))?;
    Ok(())
}

pub fn load_chain(path: &Path) -> Result<Chain, PersistError> {
    decode_chain(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::tests::build_chain;
    use crate::chain::validate_chain;

    #[test]
    fn round_trip() {
        let chain = build_chain(5);
        let bytes = encode_chain(&chain);
        let back = decode_chain(&bytes).unwrap();
        assert_eq!(back, chain);
        assert!(validate_chain(&back).is_ok());
        assert_eq!(encode_chain(&back), bytes);
    }

    #[test]
    fn truncation_is_malformed() {
        let bytes = encode_chain(&build_chain(2));
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                decode_chain(&bytes[..cut]),
                Err(PersistError::Malformed(_))
            ));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.bin");
        let chain = build_chain(3);
        save_chain(&chain, &path).unwrap();
        assert_eq!(load_chain(&path).unwrap(), chain);
    }
}
