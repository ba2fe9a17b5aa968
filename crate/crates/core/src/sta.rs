//! Spatiotemporal attention: spatial MHSA over the token grid (ROI
//! messengers joined) gated channel-wise by a squeeze-excitation branch.

use tavp_tensor::{Result, Session, Var};

use crate::nn::{Attention, Builder, LayerNorm, Linear};

pub const SE_REDUCTION: usize = 4;

#[derive(Debug, Clone)]
pub struct SpatialOutput {
    /// `[B, hw, C']`
    pub a_s: Var,
    /// Updated messengers `[B, M, C']` when collecting; `None` otherwise.
    pub messengers: Option<Var>,
    /// `[B, heads, nq, nk]`
    pub weights: Var,
}

/// Squeeze-excitation gate `C' -> C'/4 -> C'` with GELU then sigmoid.
#[derive(Debug, Clone)]
pub struct TemporalAttention {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TemporalAttention {
    pub fn new(b: &mut Builder, width: usize) -> Result<Self> {
        let hidden = (width / SE_REDUCTION).max(1);
        Ok(TemporalAttention {
            fc1: Linear::new(&mut b.scope("fc1"), width, hidden, true)?,
            fc2: Linear::new(&mut b.scope("fc2"), hidden, width, true)?,
        })
    }

    /// `[B, hw, C'] -> [B, 1, C']` gates in (0, 1).
    pub fn forward(&self, s: &Session, f: &Var) -> Result<Var> {
        let pooled = f.mean_axis(1, true)?;
        self.fc2.forward(s, &self.fc1.forward(s, &pooled)?.gelu()?)?.sigmoid()
    }
}

/// Layer norm plus MHSA over `[F; T_R]`, optionally followed by the
/// temporal gate. With the gate absent this is a plain transformer
/// attention sublayer.
#[derive(Debug, Clone)]
pub struct Sta {
    pub ln: LayerNorm,
    pub attn: Attention,
    pub temporal: Option<TemporalAttention>,
}

impl Sta {
    pub fn new(b: &mut Builder, width: usize, heads: usize, gated: bool) -> Result<Self> {
        Ok(Sta {
            ln: LayerNorm::new(&mut b.scope("ln"), width)?,
            attn: Attention::new(&mut b.scope("attn"), width, heads)?,
            temporal: if gated { Some(TemporalAttention::new(&mut b.scope("se"), width)?) } else { None },
        })
    }

    /// MHSA over `LN([F; T_R])`. When `collect` is false the messengers are
    /// visible as keys and values only and come back unchanged.
    pub fn spatial_attention(&self, s: &Session, f: &Var, t_r: Option<&Var>, collect: bool) -> Result<SpatialOutput> {
        let n = f.shape()[1];
        let tokens = match t_r {
            Some(t) => Var::concat(&[f, t], 1)?,
            None => f.clone(),
        };
        let normed = self.ln.forward(s, &tokens)?;
        let total = normed.shape()[1];
        if collect || t_r.is_none() {
            let o = self.attn.forward(s, &normed, &normed, None)?;
            let a_s = o.out.slice(1, 0, n)?;
            let messengers = if total > n { Some(o.out.slice(1, n, total)?) } else { None };
            Ok(SpatialOutput { a_s, messengers, weights: o.weights })
        } else {
            let query = normed.slice(1, 0, n)?;
            let o = self.attn.forward(s, &query, &normed, None)?;
            Ok(SpatialOutput { a_s: o.out, messengers: None, weights: o.weights })
        }
    }

    pub fn temporal_attention(&self, s: &Session, f: &Var) -> Result<Option<Var>> {
        self.temporal.as_ref().map(|t| t.forward(s, f)).transpose()
    }

    /// `F' = (A_t ⊙ A_s) ⊙ F` with `A_t` broadcast over spatial rows. Without
    /// the gate the attention output `A_s` is returned as is.
    pub fn forward(&self, s: &Session, f: &Var, t_r: Option<&Var>, collect: bool) -> Result<(Var, Option<Var>)> {
        let sp = self.spatial_attention(s, f, t_r, collect)?;
        let out = match self.temporal_attention(s, f)? {
            Some(a_t) => a_t.mul(&sp.a_s)?.mul(f)?,
            None => sp.a_s,
        };
        Ok((out, sp.messengers))
    }
}
