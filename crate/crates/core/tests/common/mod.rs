//! Helpers shared by the integration tests. Nothing here calls into the
//! derivation code; the oracle rewrites sentential forms by hand.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use coinai_core::chain::{Block, Chain, ChainParams, Mempool, Transaction};
use coinai_core::Hash512;

/// A toy grammar as plain data: rule head -> alternatives, each a list of
/// tokens. Tokens written `<name>` are nonterminals. The first rule is the
/// start symbol.
pub struct Toy {
    pub name: &'static str,
    pub rules: &'static [(&'static str, &'static [&'static [&'static str]])],
}

pub const RIGHT_REC: Toy = Toy {
    name: "right-recursive",
    rules: &[("s", &[&["a"], &["b", "<s>"]])],
};

pub const EXPR: Toy = Toy {
    name: "expressions",
    rules: &[
        ("e", &[&["<t>"], &["<t>", "plus", "<e>"]]),
        ("t", &[&["x"], &["y"], &["lp", "<e>", "rp"]]),
    ],
};

pub const LAYERS: Toy = Toy {
    name: "layers",
    rules: &[
        ("net", &[&["<layer>"], &["<layer>", "<net>"]]),
        ("layer", &[&["conv", "<size>", "<act>"], &["fc", "<size>", "<act>"], &["<pool>"]]),
        ("pool", &[&["pool", "<size>"]]),
        ("size", &[&["1"], &["2"], &["3"], &["4"], &["5"]]),
        ("act", &[&["relu"], &["tanh"], &["sigmoid"], &["linear"]]),
    ],
};

pub const TOYS: [Toy; 3] = [RIGHT_REC, EXPR, LAYERS];

impl Toy {
    pub fn bnf(&self) -> String {
        let mut out = String::new();
        for (head, alts) in self.rules {
            let rhs: Vec<String> = alts.iter().map(|a| a.join(" ")).collect();
            out.push_str(&format!("<{head}> ::= {}\n", rhs.join(" | ")));
        }
        out
    }

    fn alternatives(&self, head: &str) -> &'static [&'static [&'static str]] {
        self.rules.iter().find(|(h, _)| *h == head).expect("defined").1
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum OracleOutcome {
    Sentence(Vec<String>),
    StepLimit,
    ResetLimit,
}

/// Reference derivation: repeatedly rewrite the leftmost nonterminal of the
/// sentential form. With `n` alternatives, a counter below `n` is first
/// restored to `h`, then alternative `m mod n` is taken and `m` becomes
/// `m / n`. Single-alternative rules take no input.
pub fn oracle_derive(toy: &Toy, h: u64, max_steps: usize, max_resets: usize) -> OracleOutcome {
    let mut form: Vec<String> = vec![format!("<{}>", toy.rules[0].0)];
    let mut m = h;
    let mut steps = 0;
    let mut resets = 0;
    loop {
        let Some(pos) = form.iter().position(|t| t.starts_with('<')) else {
            return OracleOutcome::Sentence(form);
        };
        if steps == max_steps {
            return OracleOutcome::StepLimit;
        }
        steps += 1;
        let head = form[pos].trim_matches(|c| c == '<' || c == '>').to_string();
        let alts = toy.alternatives(&head);
        let n = alts.len() as u64;
        let pick = if n == 1 {
            0
        } else {
            if m < n {
                resets += 1;
                if resets > max_resets {
                    return OracleOutcome::ResetLimit;
                }
                m = h;
            }
            let i = m % n;
            m /= n;
            i as usize
        };
        let replacement: Vec<String> = alts[pick].iter().map(|s| s.to_string()).collect();
        form.splice(pos..=pos, replacement);
    }
}

/// Integer `h` as a big-endian 512-bit hash.
pub fn hash_of_int(h: u64) -> Hash512 {
    let mut b = [0u8; 64];
    b[56..].copy_from_slice(&h.to_be_bytes());
    Hash512(b)
}

/// Accepts every digest; integration tests do not model storage here.
pub struct AnyModel;

impl coinai_core::chain::ModelRegistry for AnyModel {
    fn has_model(&self, _: &Hash512) -> bool {
        true
    }
}

pub fn funded_genesis() -> BTreeMap<String, u64> {
    ["alice", "bob", "carol"].iter().map(|a| (a.to_string(), 10_000)).collect()
}

/// A chain of `n` blocks on top of genesis, each carrying two transfers,
/// with some rent and penalties in between.
pub fn build_chain(n: u64, salt: u64) -> Chain {
    let mut chain = Chain::new(ChainParams::default(), funded_genesis());
    let mut pool = Mempool::new();
    for h in 1..=n {
        let txs = vec![
            Transaction::new("alice", "bob", h + salt % 7, 1 + salt % 3, h, salt.wrapping_mul(1000).wrapping_add(2 * h)),
            Transaction::new("bob", "carol", 2, h % 4, h, salt.wrapping_mul(1000).wrapping_add(2 * h + 1)),
        ];
        for tx in &txs {
            pool.submit(tx.clone(), |id| chain.contains_tx(id)).unwrap();
        }
        let block = Block {
            height: h,
            prev_hash: chain.tip_hash(),
            transactions: txs,
            nonce: h ^ salt,
            miner: format!("miner-{}", h.wrapping_add(salt) % 3),
            model_digest: Hash512::digest(&[h.to_be_bytes(), salt.to_be_bytes()].concat()),
            reported_score: 0.5 + (h % 50) as f64 / 100.0,
            problem_id: "p".into(),
            timestamp: h * 3,
        };
        chain.append_block(block, &mut pool, &AnyModel).unwrap();
        if h % 3 == 0 {
            chain.credit_rent("keeper", 2).unwrap();
            chain.penalize("carol", 1);
        }
    }
    chain
}

/// Byte ranges of every block record and seal in an encoded chain file,
/// read straight from the documented layout.
pub fn block_byte_ranges(bytes: &[u8]) -> Vec<std::ops::Range<usize>> {
    let u32_at = |p: usize| u32::from_be_bytes(bytes[p..p + 4].try_into().unwrap()) as usize;
    // magic, version, max_transactions, block_reward
    let mut p = 4 + 2 + 4 + 8;
    let accounts = u32_at(p);
    p += 4;
    for _ in 0..accounts {
        p += 4 + u32_at(p) + 8;
    }
    let blocks = u32_at(p);
    p += 4;
    let mut out = Vec::new();
    for _ in 0..blocks {
        let len = u32_at(p);
        p += 4;
        out.push(p..p + len + 64);
        p += len + 64;
    }
    out
}

pub fn distinct<T: Ord + Clone>(items: &[T]) -> BTreeSet<T> {
    items.iter().cloned().collect()
}
