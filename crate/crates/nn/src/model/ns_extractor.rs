use ndarray::{Array2, ArrayD, IxDyn};
use nsx_core::Real;

use super::{AttentionKind, AttentionMap, ModelConfig, Output};
use crate::autograd::{ConvGeom, Tape, Var};
use crate::layers::{dims3, Blstm, Conv2d, ConvTranspose2d, Linear, Norm, PRelu, EPS};
use crate::params::{Bound, Init, ParamStore};

/// Averaging weights `[T, 1]` of adaptive average pooling to three bins followed
/// by a kernel-3 average over those bins.
pub(crate) fn pooling_weights<T: Real>(frames: usize) -> Array2<T> {
    let mut w = vec![0.0f64; frames];
    for i in 0..3 {
        let start = i * frames / 3;
        let end = ((i + 1) * frames).div_ceil(3);
        let share = 1.0 / (3 * (end - start)) as f64;
        w[start..end].iter_mut().for_each(|v| *v += share);
    }
    Array2::from_shape_vec((frames, 1), w.into_iter().map(T::lit).collect()).expect("pool")
}

#[derive(Debug, Clone)]
struct ResBlock {
    conv1: Conv2d,
    act: PRelu,
    conv2: Conv2d,
}

/// Self-enrolled speaker encoder: `[D, T, F]` to an embedding `[F]` and logits `[N]`.
#[derive(Debug, Clone)]
pub(crate) struct SpeakerEncoder {
    reduce: Conv2d,
    blocks: Vec<ResBlock>,
    classifier: Linear,
}

impl SpeakerEncoder {
    fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: &ModelConfig) -> Self {
        let f = cfg.bins;
        let geom = ConvGeom::new((1, 3), (1, 1), (0, 1));
        let blocks = (0..3)
            .map(|r| ResBlock {
                conv1: Conv2d::new(s, init, &format!("{name}.res{r}.conv1"), f, f, geom),
                act: PRelu::new(s, init, &format!("{name}.res{r}.act"), f),
                conv2: Conv2d::new(s, init, &format!("{name}.res{r}.conv2"), f, f, geom),
            })
            .collect();
        Self {
            reduce: Conv2d::pointwise(s, init, &format!("{name}.reduce"), cfg.channels, 1),
            blocks,
            classifier: Linear::new(s, init, &format!("{name}.classifier"), f, cfg.speakers),
        }
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, h: &Var<T>) -> (Var<T>, Var<T>) {
        let (_, t, f) = dims3(h);
        let r = self.reduce.forward(tape, p, h);
        let r = tape.reshape(&r, &[t, f]);
        let r = tape.permute(&r, &[1, 0]);
        let mut x = tape.reshape(&r, &[f, 1, t]);
        for b in &self.blocks {
            let y = b.conv1.forward(tape, p, &x);
            let y = b.act.forward(tape, p, &y, 0);
            let y = b.conv2.forward(tape, p, &y);
            x = tape.add(&x, &y);
        }
        let x = tape.reshape(&x, &[f, t]);
        let pool = tape.constant(pooling_weights::<T>(t).into_dyn());
        let e = tape.matmul(&x, &pool, false, false);
        let e = tape.reshape(&e, &[f]);
        let logits = self.classifier.forward(tape, p, &e);
        (e, logits)
    }
}

/// Embedding fusion followed by the unfold / BLSTM / transposed-conv path along frequency.
#[derive(Debug, Clone)]
pub(crate) struct Fusion {
    merge: Option<Conv2d>,
    norm: Norm,
    blstm: Blstm,
    deconv: ConvTranspose2d,
    geom: ConvGeom,
    padded: usize,
}

impl Fusion {
    fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: &ModelConfig) -> Self {
        let (d, i, h) = (cfg.channels, cfg.unfold_kernel, cfg.hidden());
        let geom = ConvGeom::new((1, i), (1, cfg.unfold_stride), (0, 0));
        Self {
            merge: (!cfg.ablate_se).then(|| Conv2d::pointwise(s, init, &format!("{name}.merge"), d + 1, d)),
            norm: Norm::new(s, init, &format!("{name}.norm"), d * i),
            blstm: Blstm::new(s, init, &format!("{name}.blstm"), d * i, h),
            deconv: ConvTranspose2d::new(s, init, &format!("{name}.deconv"), 2 * h, d, geom),
            geom,
            padded: cfg.padded_bins(),
        }
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, h: &Var<T>, e: Option<&Var<T>>) -> Var<T> {
        let (_, t, f) = dims3(h);
        let base = match (&self.merge, e) {
            (Some(merge), Some(e)) => {
                let ones = tape.constant(ArrayD::from_elem(IxDyn(&[t, 1]), T::one()));
                let e_row = tape.reshape(e, &[1, f]);
                let tiled = tape.matmul(&ones, &e_row, false, false);
                let tiled = tape.reshape(&tiled, &[1, t, f]);
                merge.forward(tape, p, &tape.concat(&[h, &tiled], 0))
            }
            _ => h.clone(),
        };
        let x = tape.pad(&base, 2, 0, self.padded - f);
        let u = tape.im2col(&x, self.geom);
        let u = self.norm.forward(tape, p, &u, &[0], 0);
        let u = tape.permute(&u, &[2, 1, 0]);
        let y = self.blstm.forward(tape, p, &u);
        let y = tape.permute(&y, &[2, 1, 0]);
        let y = self.deconv.forward(tape, p, &y, (t, self.padded));
        let y = tape.slice(&y, 2, 0, f);
        tape.add(&base, &y)
    }
}

/// Multi-head self-attention over one spectrogram axis.
///
/// [`AttentionKind::Subband`] attends between frequencies (an `F × F` map per head,
/// queries flattened over time); [`AttentionKind::Fullband`] attends between frames
/// (`T × T`, flattened over frequency).
#[derive(Debug, Clone)]
pub(crate) struct Mha {
    kind: AttentionKind,
    heads: usize,
    att_dim: usize,
    q: (Conv2d, PRelu, Norm),
    k: (Conv2d, PRelu, Norm),
    v: (Conv2d, PRelu, Norm),
    proj: (Conv2d, PRelu, Norm),
}

impl Mha {
    fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: &ModelConfig, kind: AttentionKind) -> Self {
        let (d, le) = (cfg.channels, cfg.heads * cfg.att_dim);
        let mut path = |tag: &str, out: usize| {
            let n = format!("{name}.{tag}");
            (
                Conv2d::pointwise(s, init, &format!("{n}.conv"), d, out),
                PRelu::new(s, init, &format!("{n}.act"), out),
                Norm::new(s, init, &format!("{n}.norm"), out),
            )
        };
        Self {
            kind,
            heads: cfg.heads,
            att_dim: cfg.att_dim,
            q: path("q", le),
            k: path("k", le),
            v: path("v", d),
            proj: path("proj", d),
        }
    }

    /// `[L, n, m·width]` where `n` is the attended axis and `m` the other one.
    fn project<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, path: &(Conv2d, PRelu, Norm), width: usize) -> Var<T> {
        let (_, t, f) = dims3(x);
        let l = self.heads;
        let y = path.0.forward(tape, p, x);
        let y = path.1.forward(tape, p, &y, 0);
        let y = tape.reshape(&y, &[l, width, t, f]);
        let axes: &[usize] = match self.kind {
            AttentionKind::Subband => &[1, 2],
            AttentionKind::Fullband => &[1, 3],
        };
        let y = tape.normalize(&y, axes, T::lit(EPS));
        let y = tape.reshape(&y, &[l * width, t, f]);
        let y = path.2.affine(tape, p, &y, 0);
        let y = tape.reshape(&y, &[l, width, t, f]);
        match self.kind {
            AttentionKind::Subband => tape.reshape(&tape.permute(&y, &[0, 3, 2, 1]), &[l, f, t * width]),
            AttentionKind::Fullband => tape.reshape(&tape.permute(&y, &[0, 2, 3, 1]), &[l, t, f * width]),
        }
    }

    fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>, maps: Option<&mut Vec<ArrayD<T>>>) -> Var<T> {
        let (d, t, f) = dims3(x);
        let (l, e) = (self.heads, self.att_dim);
        let dv = d / l;
        let q = self.project(tape, p, x, &self.q, e);
        let k = self.project(tape, p, x, &self.k, e);
        let v = self.project(tape, p, x, &self.v, dv);
        let other = match self.kind {
            AttentionKind::Subband => t,
            AttentionKind::Fullband => f,
        };
        let scores = tape.bmm(&q, &k, false, true);
        let scores = tape.scale(&scores, T::one() / T::from_usize_lossy(other * e).sqrt());
        let att = tape.softmax(&scores);
        if let Some(maps) = maps {
            maps.push(att.value().clone());
        }
        let y = tape.bmm(&att, &v, false, false);
        let y = match self.kind {
            AttentionKind::Subband => tape.permute(&tape.reshape(&y, &[l, f, t, dv]), &[0, 3, 2, 1]),
            AttentionKind::Fullband => tape.permute(&tape.reshape(&y, &[l, t, f, dv]), &[0, 3, 1, 2]),
        };
        let y = tape.reshape(&y, &[d, t, f]);
        let y = self.proj.0.forward(tape, p, &y);
        let y = self.proj.1.forward(tape, p, &y, 0);
        let axes: &[usize] = match self.kind {
            AttentionKind::Subband => &[0, 1],
            AttentionKind::Fullband => &[0, 2],
        };
        let y = self.proj.2.forward(tape, p, &y, axes, 0);
        tape.add(x, &y)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ExtractorBlock {
    speaker: Option<SpeakerEncoder>,
    fusion: Fusion,
    subband: Option<Mha>,
    fullband: Option<Mha>,
}

impl ExtractorBlock {
    fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, name: &str, cfg: &ModelConfig) -> Self {
        Self {
            speaker: (!cfg.ablate_se).then(|| SpeakerEncoder::new(s, init, &format!("{name}.speaker"), cfg)),
            fusion: Fusion::new(s, init, &format!("{name}.fusion"), cfg),
            subband: (!cfg.ablate_t_att)
                .then(|| Mha::new(s, init, &format!("{name}.subband"), cfg, AttentionKind::Subband)),
            fullband: (!cfg.ablate_f_att)
                .then(|| Mha::new(s, init, &format!("{name}.fullband"), cfg, AttentionKind::Fullband)),
        }
    }
}

/// Input encoder, `C` extractor blocks and the output transposed convolution.
#[derive(Debug, Clone)]
pub struct NsExtractor {
    encoder: Conv2d,
    encoder_norm: Norm,
    pub(crate) blocks: Vec<ExtractorBlock>,
    decoder: ConvTranspose2d,
}

impl NsExtractor {
    pub fn new<T: Real>(s: &mut ParamStore<T>, init: &mut Init, cfg: &ModelConfig) -> Self {
        let d = cfg.channels;
        Self {
            encoder: Conv2d::new(s, init, "encoder.conv", 2, d, ConvGeom::same(3, 3)),
            encoder_norm: Norm::new(s, init, "encoder.norm", d),
            blocks: (0..cfg.blocks).map(|c| ExtractorBlock::new(s, init, &format!("blocks.{c}"), cfg)).collect(),
            decoder: ConvTranspose2d::new(s, init, "decoder", d, 2, ConvGeom::same(3, 3)),
        }
    }

    /// Embeds a `[2, F, T]` spectrogram as `[D, T, F]`.
    pub fn encode<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>) -> Var<T> {
        let x = tape.permute(spec, &[0, 2, 1]);
        let h = self.encoder.forward(tape, p, &x);
        self.encoder_norm.forward(tape, p, &h, &[0, 1, 2], 0)
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, p: &Bound<T>, spec: &Var<T>, inspect: bool) -> Output<T> {
        let mut h = self.encode(tape, p, spec);
        let (_, t, f) = dims3(&h);
        let mut logits = Vec::new();
        let mut attention = Vec::new();
        for (c, b) in self.blocks.iter().enumerate() {
            let e = b.speaker.as_ref().map(|se| {
                let (e, l) = se.forward(tape, p, &h);
                logits.push(l);
                e
            });
            h = b.fusion.forward(tape, p, &h, e.as_ref());
            for mha in [&b.subband, &b.fullband].into_iter().flatten() {
                let mut maps = Vec::new();
                h = mha.forward(tape, p, &h, inspect.then_some(&mut maps));
                attention.extend(maps.into_iter().map(|weights| AttentionMap { block: c, kind: mha.kind, weights }));
            }
        }
        let y = self.decoder.forward(tape, p, &h, (t, f));
        Output { spec: tape.permute(&y, &[0, 2, 1]), logits, attention }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig { blocks: 1, channels: 4, att_dim: 2, heads: 2, lstm_hidden: Some(4), bins: 17, speakers: 3, ..ModelConfig::default() }
    }

    fn build(cfg: &ModelConfig) -> (ParamStore<f64>, NsExtractor) {
        let mut s = ParamStore::new();
        let net = NsExtractor::new(&mut s, &mut Init::new(ChaCha8Rng::seed_from_u64(5)), cfg);
        (s, net)
    }

    fn zero(s: &mut ParamStore<f64>, name: &str) {
        let id = s.find(name).unwrap_or_else(|| panic!("{name}"));
        s.get_mut(id).fill(0.0);
    }

    #[test]
    fn pooling_weights_oracle() {
        // brute force: adaptive pool to 3 bins, then average the bins
        for t in [1usize, 2, 3, 5, 10, 626] {
            let w = pooling_weights::<f64>(t);
            let x: Vec<f64> = (0..t).map(|i| ((i * 7919) % 101) as f64).collect();
            let bins: Vec<f64> = (0..3)
                .map(|i| {
                    let (a, b) = ((i * t) as f64 / 3.0, ((i + 1) * t) as f64 / 3.0);
                    let (a, b) = (a.floor() as usize, b.ceil() as usize);
                    x[a..b].iter().sum::<f64>() / (b - a) as f64
                })
                .collect();
            let want = bins.iter().sum::<f64>() / 3.0;
            let got: f64 = (0..t).map(|i| w[[i, 0]] * x[i]).sum();
            assert!((got - want).abs() < 1e-9, "t={t}");
            assert!((w.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_normalises_before_affine() {
        let cfg = tiny();
        let (s, net) = build(&cfg);
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let h = net.encode(&tape, &p, &tape.constant(random(&[2, 17, 9], 1)));
        assert_eq!(h.shape(), &[4, 9, 17]);
        let v = h.value();
        let n = v.len() as f64;
        let mean = v.sum() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4, "{mean} {var}");
        // silent input leaves only the bias pattern
        let z = net.encode(&tape, &p, &tape.constant(ArrayD::zeros(IxDyn(&[2, 17, 3]))));
        assert!(z.value().iter().all(|x| x.is_finite() && *x == 0.0));
    }

    #[test]
    fn speaker_encoder_shapes_and_constant_pooling() {
        let cfg = tiny();
        let (s, net) = build(&cfg);
        let se = net.blocks[0].speaker.as_ref().unwrap();
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let (e, logits) = se.forward(&tape, &p, &tape.constant(random(&[4, 7, 17], 2)));
        assert_eq!(e.shape(), &[17]);
        assert_eq!(logits.shape(), &[3]);
        let w = pooling_weights::<f64>(7);
        let pooled: f64 = w.iter().map(|v| v * 2.5).sum();
        assert!((pooled - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fusion_is_identity_with_zero_output_weights() {
        let cfg = ModelConfig { ablate_se: true, ..tiny() };
        let (mut s, net) = build(&cfg);
        zero(&mut s, "blocks.0.fusion.deconv.weight");
        zero(&mut s, "blocks.0.fusion.deconv.bias");
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let x = tape.constant(random(&[4, 5, 17], 3));
        let y = net.blocks[0].fusion.forward(&tape, &p, &x, None);
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn attention_is_identity_with_zero_output_affine() {
        let cfg = tiny();
        for tag in ["subband", "fullband"] {
            let (mut s, net) = build(&cfg);
            zero(&mut s, &format!("blocks.0.{tag}.proj.norm.gamma"));
            zero(&mut s, &format!("blocks.0.{tag}.proj.norm.beta"));
            let tape = Tape::inference();
            let p = s.bind(&tape);
            let x = tape.constant(random(&[4, 6, 17], 4));
            let b = &net.blocks[0];
            let m = if tag == "subband" { b.subband.as_ref() } else { b.fullband.as_ref() };
            let y = m.unwrap().forward(&tape, &p, &x, None);
            assert_eq!(y.value(), x.value(), "{tag}");
        }
    }

    #[test]
    fn attention_maps_have_expected_shapes() {
        let cfg = tiny();
        let (s, net) = build(&cfg);
        let tape = Tape::inference();
        let p = s.bind(&tape);
        let out = net.forward(&tape, &p, &tape.constant(random(&[2, 17, 6], 6)), true);
        assert_eq!(out.attention.len(), 2);
        assert_eq!(out.attention[0].kind, AttentionKind::Subband);
        assert_eq!(out.attention[0].weights.shape(), &[2, 17, 17]);
        assert_eq!(out.attention[1].weights.shape(), &[2, 6, 6]);
        for m in &out.attention {
            for row in m.weights.lanes(ndarray::Axis(2)) {
                assert!((row.sum() - 1.0).abs() < 1e-5);
            }
        }
    }
}
