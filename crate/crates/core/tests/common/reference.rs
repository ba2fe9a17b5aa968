use tavp::model::ModelConfig;
use tavp::nn::LN_EPS;
use tavp_tensor::{Graph, ParamStore, Result, Tensor, Var};

/// A standard pre-norm transformer video predictor written against raw ops,
/// reading its weights from `store` by name.
pub struct Reference<'a> {
    pub g: Graph,
    pub store: &'a ParamStore,
}

impl Reference<'_> {
    fn p(&self, name: &str) -> Var {
        self.g.constant(self.store.get(self.store.id(name).unwrap_or_else(|| panic!("{name}"))).clone())
    }

    fn linear(&self, x: &Var, name: &str) -> Result<Var> {
        x.matmul(&self.p(&format!("{name}.weight")))?.add(&self.p(&format!("{name}.bias")))
    }

    fn layer_norm(&self, x: &Var, name: &str) -> Result<Var> {
        x.layer_norm(x.rank() - 1, Some(&self.p(&format!("{name}.gamma"))), Some(&self.p(&format!("{name}.beta"))), LN_EPS)
    }

    fn group_norm(&self, x: &Var, name: &str) -> Result<Var> {
        let s = x.shape().to_vec();
        let groups = s[1] / s[1].min(8);
        let y = x.reshape(&[s[0], groups, s[1] / groups * s[2] * s[3]])?.layer_norm(2, None, None, LN_EPS)?.reshape(&s)?;
        y.mul(&self.p(&format!("{name}.gamma")))?.add(&self.p(&format!("{name}.beta")))
    }

    fn self_attention(&self, x: &Var, name: &str, heads: usize) -> Result<Var> {
        let [b, n, c] = [x.shape()[0], x.shape()[1], x.shape()[2]];
        let d = c / heads;
        let split = |v: Var| v.reshape(&[b, n, heads, d])?.permute(&[0, 2, 1, 3]);
        let q = split(self.linear(x, &format!("{name}.q"))?)?;
        let k = split(self.linear(x, &format!("{name}.k"))?)?;
        let v = split(self.linear(x, &format!("{name}.v"))?)?;
        let w = q.matmul(&k.transpose(2, 3)?)?.scale(1.0 / (d as f64).sqrt())?.softmax(3)?;
        let mixed = w.matmul(&v)?.permute(&[0, 2, 1, 3])?.reshape(&[b, n, c])?;
        self.linear(&mixed, &format!("{name}.o"))
    }

    pub fn forward(&self, cfg: &ModelConfig, frames: &Tensor) -> Result<Var> {
        let (bsz, t, c, hh, ww) = (frames.shape()[0], cfg.frames_in, cfg.channels, cfg.height, cfg.width);
        let (h, w) = cfg.grid();
        let mut x = self.g.constant(frames.clone()).reshape(&[bsz * t, c, hh, ww])?;
        for (i, stride) in [2, 1, 2, 1].into_iter().enumerate() {
            let pre = format!("embed.spatial.layer{i}");
            x = x.conv2d(&self.p(&format!("{pre}.conv.kernel")), stride, 1)?.add(&self.p(&format!("{pre}.conv.bias")))?;
            x = self.group_norm(&x, &format!("{pre}.norm"))?.gelu()?;
        }
        let ch = cfg.c_hid;
        let mut f = x.reshape(&[bsz, t, ch, h * w])?.permute(&[0, 3, 1, 2])?.reshape(&[bsz, h * w, t * ch])?;
        f = f.add(&self.p("encoder.pos"))?;
        for l in 0..cfg.depth {
            let pre = format!("encoder.layer{l}.video");
            let a = self.self_attention(&self.layer_norm(&f, &format!("{pre}.sta.ln"))?, &format!("{pre}.sta.attn"), cfg.heads)?;
            f = a.add(&f)?;
            let hidden = self.linear(&self.layer_norm(&f, &format!("{pre}.ln"))?, &format!("{pre}.mlp.fc1"))?.gelu()?;
            f = f.add(&self.linear(&hidden, &format!("{pre}.mlp.fc2"))?)?;
        }
        let z = f.reshape(&[bsz, h * w, t, ch])?.permute(&[0, 2, 3, 1])?.reshape(&[bsz, t, ch, h, w])?;
        let (tp, cd) = (cfg.frames_out, cfg.c_dec);
        let folded = z.reshape(&[bsz, t, ch, h * w])?.permute(&[0, 3, 1, 2])?.reshape(&[bsz, h * w, t * ch])?;
        let mut y = self.linear(&folded, "decoder.video.proj")?.reshape(&[bsz, h * w, tp, cd])?.permute(&[0, 2, 3, 1])?.reshape(&[bsz * tp, cd, h, w])?;
        for (i, stride) in [1, 2, 1, 2].into_iter().enumerate() {
            let pre = format!("decoder.video.layer{i}");
            y = y.conv_transpose2d(&self.p(&format!("{pre}.deconv.kernel")), stride, 1)?.add(&self.p(&format!("{pre}.deconv.bias")))?;
            y = self.group_norm(&y, &format!("{pre}.norm"))?.gelu()?;
        }
        y = y.conv2d(&self.p("decoder.video.head.kernel"), 1, 0)?.add(&self.p("decoder.video.head.bias"))?.sigmoid()?;
        y.reshape(&[bsz, tp, c, hh, ww])
    }
}
