use crate::chain::Reader;
use crate::grammar::{
    check_feasibility, parse_architecture, ArchitectureError, ArchitectureSpec, Grammar, Infeasibility,
    ResourceLimits, Sentence,
};
use crate::Hash512;

use super::Network;

pub const BLOB_MAGIC: &[u8; 4] = b"CAIM";
pub const BLOB_VERSION: u16 = 1;

/// Canonical byte form of a trained network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelBlob(pub Vec<u8>);

impl ModelBlob {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn digest(&self) -> Hash512 {
        model_digest(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlobError {
    #[error("malformed model blob: {0}")]
    Malformed(String),
    #[error("blob architecture does not parse: {0}")]
    Architecture(#[from] ArchitectureError),
    #[error("blob architecture does not fit its input width: {0}")]
    Infeasible(#[from] Infeasibility),
}

/// SHA3-512 of the blob bytes.
pub fn model_digest(blob: &[u8]) -> Hash512 {
    Hash512::digest(blob)
}

pub fn serialize(net: &Network) -> ModelBlob {
    let sentence = net.sentence().to_string();
    let mut out = Vec::with_capacity(18 + sentence.len() + 8 * net.parameter_count());
    out.extend_from_slice(BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_be_bytes());
    out.extend_from_slice(&(net.input_width() as u32).to_be_bytes());
    out.extend_from_slice(&(net.num_classes() as u32).to_be_bytes());
    out.extend_from_slice(&(sentence.len() as u32).to_be_bytes());
    out.extend_from_slice(sentence.as_bytes());
    for p in net.parameters() {
        out.extend_from_slice(&p.to_be_bytes());
    }
    ModelBlob(out)
}

/// Rebuilds a network, reparsing the embedded sentence with `grammar`. An
/// empty sentence stands for a network with no hidden layers.
pub fn deserialize(blob: &[u8], grammar: &Grammar) -> Result<Network, BlobError> {
    let bad = |e: crate::chain::PersistError| BlobError::Malformed(e.to_string());
    let mut r = Reader::new(blob);
    if r.take(4).map_err(bad)? != BLOB_MAGIC {
        return Err(BlobError::Malformed("bad magic".into()));
    }
    let version = r.u16().map_err(bad)?;
    if version != BLOB_VERSION {
        return Err(BlobError::Malformed(format!("unsupported version {version}")));
    }
    let input_width = r.u32().map_err(bad)? as usize;
    let num_classes = r.u32().map_err(bad)? as usize;
    if input_width == 0 || num_classes < 2 {
        return Err(BlobError::Malformed("bad input width or class count".into()));
    }
    let text = r.string().map_err(bad)?;
    let sentence = Sentence::from_text(&text);
    if sentence.to_string() != text {
        return Err(BlobError::Malformed("sentence is not in canonical spacing".into()));
    }
    let spec = if sentence.is_empty() {
        ArchitectureSpec {
            conv_layers: vec![],
            fc_layers: vec![],
        }
    } else {
        let spec = parse_architecture(&sentence, grammar)?;
        check_feasibility(&spec, input_width, &ResourceLimits { max_parameters: u64::MAX })?;
        spec
    };
    // Size check before allocating anything proportional to the header.
    let hidden = spec.parameter_count(input_width);
    let last = spec
        .fc_layers
        .last()
        .map(|f| f.num_units as u64)
        .or_else(|| spec.conv_widths(input_width).and_then(|w| {
            let last_w = *w.last()? as u64;
            Some(spec.conv_layers.last()?.num_filters as u64 * last_w)
        }))
        .unwrap_or(input_width as u64);
    let head = last
        .saturating_mul(num_classes as u64)
        .saturating_add(num_classes as u64);
    let expected = hidden.saturating_add(head).saturating_mul(8);
    let remaining = (blob.len() - (18 + text.len())) as u64;
    if remaining != expected {
        return Err(BlobError::Malformed(format!(
            "expected {expected} parameter bytes, found {remaining}"
        )));
    }
    let mut net = Network::zeroed(spec, sentence, input_width, num_classes);
    for layer in net.layers_mut() {
        for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *p = f64::from_be_bytes(r.take(8).map_err(bad)?.try_into().unwrap());
        }
    }
    debug_assert!(r.done());
    Ok(net)
}
