use super::ops::{conv2d, pixel_shuffle, residual_block, ConvLayer};
use super::tensor::Tensor3;
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::resample::ScaleFactor;

/// An EDSR network: architecture header plus every conv layer in execution
/// order.
///
/// Layer order is: head (`3 -> n_feats`), two convs per residual block,
/// body-end conv, one upsampler conv per pixel-shuffle stage
/// (`n_feats -> n_feats * r^2`), final conv (`n_feats -> 3`). Scales 2 and 3
/// use a single stage; scale 4 uses two x2 stages.
#[derive(Debug, Clone, PartialEq)]
pub struct SrModel {
    scale: ScaleFactor,
    n_feats: usize,
    n_resblocks: usize,
    res_scale: f32,
    rgb_mean: [f32; 3],
    layers: Vec<ConvLayer>,
}

impl SrModel {
    pub fn new(
        scale: ScaleFactor,
        n_feats: usize,
        n_resblocks: usize,
        res_scale: f32,
        rgb_mean: [f32; 3],
        layers: Vec<ConvLayer>,
    ) -> Result<Self> {
        if n_feats == 0 {
            return Err(Error::InvalidModel("n_feats must be positive".into()));
        }
        if !res_scale.is_finite() || rgb_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidModel("non-finite header value".into()));
        }
        let expected = layer_shapes(scale, n_feats, n_resblocks);
        if layers.len() != expected.len() {
            return Err(Error::InvalidModel(format!(
                "expected {} layers for {n_resblocks} residual blocks at x{scale}, got {}",
                expected.len(),
                layers.len()
            )));
        }
        for (idx, (layer, (out, inp))) in layers.iter().zip(&expected).enumerate() {
            if (layer.out_channels(), layer.in_channels()) != (*out, *inp) {
                return Err(Error::InvalidModel(format!(
                    "layer {idx} ({}) is {}->{}, expected {inp}->{out}",
                    layer_role(idx, n_resblocks),
                    layer.in_channels(),
                    layer.out_channels()
                )));
            }
        }
        Ok(Self {
            scale,
            n_feats,
            n_resblocks,
            res_scale,
            rgb_mean,
            layers,
        })
    }

    /// Model whose weights and biases are all zero.
    pub fn zeros(scale: ScaleFactor, n_feats: usize, n_resblocks: usize, res_scale: f32, rgb_mean: [f32; 3]) -> Self {
        let layers = layer_shapes(scale, n_feats, n_resblocks)
            .into_iter()
            .map(|(o, i)| ConvLayer::zeros(o, i))
            .collect();
        Self::new(scale, n_feats, n_resblocks, res_scale, rgb_mean, layers)
            .expect("zero model has a valid shape chain")
    }

    pub fn scale(&self) -> ScaleFactor {
        self.scale
    }

    pub fn n_feats(&self) -> usize {
        self.n_feats
    }

    pub fn n_resblocks(&self) -> usize {
        self.n_resblocks
    }

    pub fn res_scale(&self) -> f32 {
        self.res_scale
    }

    pub fn rgb_mean(&self) -> [f32; 3] {
        self.rgb_mean
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn head(&self) -> &ConvLayer {
        &self.layers[0]
    }

    pub fn block(&self, i: usize) -> (&ConvLayer, &ConvLayer) {
        (&self.layers[1 + 2 * i], &self.layers[2 + 2 * i])
    }

    pub fn body_end(&self) -> &ConvLayer {
        &self.layers[1 + 2 * self.n_resblocks]
    }

    pub fn upsampler(&self) -> &[ConvLayer] {
        let start = 2 + 2 * self.n_resblocks;
        &self.layers[start..self.layers.len() - 1]
    }

    pub fn tail(&self) -> &ConvLayer {
        self.layers.last().expect("model has layers")
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights().len() + l.bias().len())
            .sum()
    }
}

/// Pixel-shuffle factor of each upsampler stage.
pub(crate) fn upsample_stages(scale: ScaleFactor) -> &'static [usize] {
    match scale.get() {
        2 => &[2],
        3 => &[3],
        4 => &[2, 2],
        _ => unreachable!("ScaleFactor is validated"),
    }
}

/// `(out, in)` channel pairs of every layer in order.
pub(crate) fn layer_shapes(scale: ScaleFactor, n_feats: usize, n_resblocks: usize) -> Vec<(usize, usize)> {
    let mut shapes = vec![(n_feats, CHANNELS)];
    shapes.extend(std::iter::repeat_n((n_feats, n_feats), 2 * n_resblocks + 1));
    for &r in upsample_stages(scale) {
        shapes.push((n_feats * r * r, n_feats));
    }
    shapes.push((CHANNELS, n_feats));
    shapes
}

fn layer_role(idx: usize, n_resblocks: usize) -> String {
    let body_end = 1 + 2 * n_resblocks;
    match idx {
        0 => "head".into(),
        i if i < body_end => format!("resblock {} conv {}", (i - 1) / 2, (i - 1) % 2 + 1),
        i if i == body_end => "body end".into(),
        _ => format!("tail {}", idx - body_end - 1),
    }
}

/// Runs the network on `img`; output is `scale` times larger in each
/// dimension and is not clamped.
pub fn forward(model: &SrModel, img: &Image) -> Result<Image> {
    let (w, h) = img.dims();
    let mean = model.rgb_mean;
    let mut input = vec![0.0f32; CHANNELS * h * w];
    for y in 0..h {
        for x in 0..w {
            for c in 0..CHANNELS {
                input[(c * h + y) * w + x] = (img.get(x, y, c) - f64::from(mean[c])) as f32;
            }
        }
    }
    let input = Tensor3::new(CHANNELS, h, w, input)?;

    let head = conv2d(&input, model.head())?;
    let mut body = head.clone();
    for b in 0..model.n_resblocks {
        let (c1, c2) = model.block(b);
        body = residual_block(&body, c1, c2, model.res_scale)?;
    }
    let mut x = conv2d(&body, model.body_end())?.add(&head)?;

    for (conv, &r) in model.upsampler().iter().zip(upsample_stages(model.scale)) {
        x = pixel_shuffle(&conv2d(&x, conv)?, r)?;
    }
    let out = conv2d(&x, model.tail())?;

    let k = model.scale.as_usize();
    let (ow, oh) = (w * k, h * k);
    debug_assert_eq!(out.shape(), (CHANNELS, oh, ow));
    Ok(Image::from_fn(ow, oh, |x, y, c| {
        f64::from(out.get(c, y, x)) + f64::from(mean[c])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_chain_counts() {
        let s2 = layer_shapes(ScaleFactor::new(2).unwrap(), 64, 16);
        assert_eq!(s2.len(), 36);
        assert_eq!(s2[0], (64, 3));
        assert_eq!(s2[34], (256, 64));
        assert_eq!(s2[35], (3, 64));
        let s3 = layer_shapes(ScaleFactor::new(3).unwrap(), 8, 2);
        assert_eq!(s3[s3.len() - 2], (72, 8));
        let s4 = layer_shapes(ScaleFactor::new(4).unwrap(), 8, 2);
        assert_eq!(s4.len(), 2 * 2 + 3 + 2);
    }

    #[test]
    fn rejects_broken_chain() {
        let k = ScaleFactor::new(2).unwrap();
        let mut layers: Vec<ConvLayer> = layer_shapes(k, 4, 1)
            .into_iter()
            .map(|(o, i)| ConvLayer::zeros(o, i))
            .collect();
        layers[2] = ConvLayer::zeros(4, 5);
        let err = SrModel::new(k, 4, 1, 1.0, [0.0; 3], layers.clone()).unwrap_err();
        assert!(err.to_string().contains("resblock 0 conv 2"), "{err}");
        layers.pop();
        assert!(SrModel::new(k, 4, 1, 1.0, [0.0; 3], layers).is_err());
    }

    #[test]
    fn zero_model_outputs_mean() {
        for k in 2..=4 {
            let scale = ScaleFactor::new(k).unwrap();
            let model = SrModel::zeros(scale, 4, 2, 0.1, [114.0, 111.0, 103.0]);
            let img = Image::from_fn(5, 3, |x, y, c| (x * 40 + y * 7 + c) as f64);
            let out = forward(&model, &img).unwrap();
            assert_eq!(out.dims(), (5 * k as usize, 3 * k as usize));
            assert_eq!(out, Image::filled(out.width(), out.height(), [114.0, 111.0, 103.0]));
        }
    }

    #[test]
    fn accessors_partition_layers() {
        let m = SrModel::zeros(ScaleFactor::new(4).unwrap(), 2, 3, 1.0, [0.0; 3]);
        assert_eq!(m.upsampler().len(), 2);
        assert_eq!(m.block(2).1.out_channels(), 2);
        assert_eq!(m.tail().out_channels(), 3);
        assert_eq!(m.parameter_count(), m.layers().iter().map(|l| l.weights().len() + l.out_channels()).sum::<usize>());
    }
}
