//! The system under test: a small sequential CNN with a designated Grad-CAM
//! target layer, plus the targeted backward pass from a logit to that layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;

/// Element range of a weight or bias tensor inside the model's float blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub offset: usize,
    pub len: usize,
}

impl BlobRef {
    pub fn end(&self) -> usize {
        self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// One entry of the architecture descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        activation: Activation,
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        weights: BlobRef,
        bias: BlobRef,
    },
    Maxpool2x2,
    Flatten,
    Dense {
        activation: Activation,
        in_features: usize,
        out_features: usize,
        weights: BlobRef,
        bias: BlobRef,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Maxpool2x2 => "maxpool2x2",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. })
    }

    fn blobs(&self) -> Option<(BlobRef, BlobRef)> {
        match *self {
            LayerSpec::Conv2d { weights, bias, .. } | LayerSpec::Dense { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }
}

/// Architecture descriptor as stored in an SRMTW file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    /// Layer index of the Grad-CAM target; the last conv layer when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradcam_target: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone)]
enum Layer {
    Conv {
        weights: Tensor,
        bias: Vec<f32>,
        stride: usize,
        padding: usize,
        relu: bool,
    },
    MaxPool,
    Flatten,
    Dense {
        weights: Tensor,
        bias: Vec<f32>,
        relu: bool,
    },
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub logits: Vec<f32>,
    pub probabilities: Vec<f32>,
    /// Post-activation output of the Grad-CAM target layer (`A_k(i, j)`).
    pub target_feature_maps: Tensor,
    pub best_class: usize,
}

/// Cached activations of a forward pass, kept from the target layer on so the
/// backward pass can reuse ReLU masks and pooling winners.
#[derive(Debug, Clone)]
pub struct Trace {
    outputs: Vec<Option<Tensor>>,
    argmax: Vec<Option<Vec<usize>>>,
    pub prediction: Prediction,
}

/// A validated, immutable model: descriptor, float blob and unpacked layers.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    blob: Vec<f32>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
    target: usize,
}

fn slice_blob(blob: &[f32], r: BlobRef, layer: usize, what: &str) -> Result<Vec<f32>> {
    blob.get(r.offset..r.end())
        .map(<[f32]>::to_vec)
        .ok_or_else(|| Error::TruncatedBlob {
            layer,
            reason: format!(
                "{what} range {}..{} exceeds blob of {} floats",
                r.offset,
                r.end(),
                blob.len()
            ),
        })
}

fn broken(layer: usize, reason: impl Into<String>) -> Error {
    Error::ShapeChainBroken {
        layer,
        reason: reason.into(),
    }
}

impl Model {
    /// Validates the descriptor against the blob and unpacks every layer.
    pub fn from_parts(spec: ModelSpec, blob: Vec<f32>) -> Result<Self> {
        if spec.num_classes == 0 {
            return Err(Error::MalformedDescriptor("num_classes must be positive".into()));
        }
        if spec.input_shape.contains(&0) {
            return Err(Error::MalformedDescriptor("input_shape has a zero axis".into()));
        }
        if let Some(names) = &spec.class_names {
            if names.len() != spec.num_classes {
                return Err(Error::MalformedDescriptor(format!(
                    "{} class names for {} classes",
                    names.len(),
                    spec.num_classes
                )));
            }
        }
        if spec.layers.is_empty() {
            return Err(Error::MalformedDescriptor("model has no layers".into()));
        }

        let mut shape: Vec<usize> = spec.input_shape.to_vec();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut shapes = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            if let Some((w, b)) = ls.blobs() {
                slice_blob(&blob, w, i, "weights")?;
                slice_blob(&blob, b, i, "bias")?;
            }
            let layer = match *ls {
                LayerSpec::Conv2d {
                    activation,
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                    weights,
                    bias,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(broken(i, format!("conv2d needs a C×H×W input, got {shape:?}")));
                    };
                    if c != in_channels {
                        return Err(broken(i, format!("declares {in_channels} input channels, receives {c}")));
                    }
                    if out_channels == 0 {
                        return Err(broken(i, "out_channels must be positive"));
                    }
                    let oh = ops::conv_output_dim(h, kernel_h, stride, padding).map_err(|e| broken(i, e.to_string()))?;
                    let ow = ops::conv_output_dim(w, kernel_w, stride, padding).map_err(|e| broken(i, e.to_string()))?;
                    let expected = out_channels * in_channels * kernel_h * kernel_w;
                    if weights.len != expected || bias.len != out_channels {
                        return Err(broken(
                            i,
                            format!(
                                "weights/bias hold {}/{} floats, kind needs {expected}/{out_channels}",
                                weights.len, bias.len
                            ),
                        ));
                    }
                    shape = vec![out_channels, oh, ow];
                    Layer::Conv {
                        weights: Tensor::new(
                            vec![out_channels, in_channels, kernel_h, kernel_w],
                            slice_blob(&blob, weights, i, "weights")?,
                        )?,
                        bias: slice_blob(&blob, bias, i, "bias")?,
                        stride,
                        padding,
                        relu: activation == Activation::Relu,
                    }
                }
                LayerSpec::Maxpool2x2 => {
                    let [c, h, w] = shape[..] else {
                        return Err(broken(i, format!("maxpool2x2 needs a C×H×W input, got {shape:?}")));
                    };
                    if h < 2 || w < 2 {
                        return Err(broken(i, format!("maxpool2x2 on {h}×{w} spatial extent")));
                    }
                    shape = vec![c, h / 2, w / 2];
                    Layer::MaxPool
                }
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    Layer::Flatten
                }
                LayerSpec::Dense {
                    activation,
                    in_features,
                    out_features,
                    weights,
                    bias,
                } => {
                    if shape.len() != 1 {
                        return Err(broken(i, format!("dense needs a flat input, got {shape:?}")));
                    }
                    if shape[0] != in_features {
                        return Err(broken(i, format!("declares {in_features} inputs, receives {}", shape[0])));
                    }
                    if weights.len != in_features * out_features || bias.len != out_features {
                        return Err(broken(
                            i,
                            format!(
                                "weights/bias hold {}/{} floats, kind needs {}/{out_features}",
                                weights.len,
                                bias.len,
                                in_features * out_features
                            ),
                        ));
                    }
                    shape = vec![out_features];
                    Layer::Dense {
                        weights: Tensor::new(
                            vec![out_features, in_features],
                            slice_blob(&blob, weights, i, "weights")?,
                        )?,
                        bias: slice_blob(&blob, bias, i, "bias")?,
                        relu: activation == Activation::Relu,
                    }
                }
            };
            layers.push(layer);
            shapes.push(shape.clone());
        }

        let last = spec.layers.len() - 1;
        if shape != [spec.num_classes] {
            return Err(broken(
                last,
                format!("final layer emits {shape:?}, model declares {} classes", spec.num_classes),
            ));
        }
        if let Some(max_end) = spec
            .layers
            .iter()
            .filter_map(LayerSpec::blobs)
            .map(|(w, b)| w.end().max(b.end()))
            .max()
        {
            if max_end < blob.len() {
                return Err(Error::MalformedDescriptor(format!(
                    "{} trailing floats after the last referenced tensor",
                    blob.len() - max_end
                )));
            }
        }

        let target = match spec.gradcam_target {
            Some(t) => match spec.layers.get(t) {
                Some(l) if l.is_conv() => t,
                Some(l) => {
                    return Err(Error::ModelHasNoTargetLayer(format!(
                        "gradcam_target {t} is a {} layer, not conv2d",
                        l.kind_name()
                    )))
                }
                None => {
                    return Err(Error::ModelHasNoTargetLayer(format!(
                        "gradcam_target {t} is past the last layer"
                    )))
                }
            },
            None => spec
                .layers
                .iter()
                .rposition(LayerSpec::is_conv)
                .ok_or_else(|| Error::ModelHasNoTargetLayer("model has no conv2d layer".into()))?,
        };

        Ok(Self {
            spec,
            blob,
            layers,
            shapes,
            target,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn blob(&self) -> &[f32] {
        &self.blob
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.spec.input_shape
    }

    /// Index of the Grad-CAM target layer.
    pub fn target_layer(&self) -> usize {
        self.target
    }

    /// Output shape of every layer, in order.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn target_shape(&self) -> &[usize] {
        &self.shapes[self.target]
    }

    pub fn class_name(&self, class: usize) -> Option<&str> {
        self.spec.class_names.as_ref()?.get(class).map(String::as_str)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.spec.input_shape {
            return Err(Error::shape(format!(
                "image shape {:?} does not match model input {:?}",
                image.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    pub fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.spec.num_classes {
            return Err(Error::InvalidClass {
                class,
                num_classes: self.spec.num_classes,
            });
        }
        Ok(())
    }

    fn apply(&self, layer: &Layer, x: Tensor) -> Result<(Tensor, Option<Vec<usize>>)> {
        Ok(match layer {
            Layer::Conv {
                weights,
                bias,
                stride,
                padding,
                relu,
            } => {
                let mut y = ops::conv2d_forward(&x, weights, bias, *stride, *padding)?;
                if *relu {
                    ops::relu_in_place(&mut y);
                }
                (y, None)
            }
            Layer::MaxPool => {
                let p = ops::maxpool2x2_forward(&x)?;
                (p.output, Some(p.argmax))
            }
            Layer::Flatten => {
                let n = x.len();
                (x.reshape(vec![n])?, None)
            }
            Layer::Dense { weights, bias, relu } => {
                let mut y = Tensor::new(vec![weights.shape()[0]], ops::dense_forward(x.data(), weights, bias)?)?;
                if *relu {
                    ops::relu_in_place(&mut y);
                }
                (y, None)
            }
        })
    }

    /// Pre-softmax class scores without keeping intermediate activations.
    pub fn logits(&self, image: &Tensor) -> Result<Vec<f32>> {
        self.check_input(image)?;
        let mut x = image.clone();
        for layer in &self.layers {
            x = self.apply(layer, x)?.0;
        }
        Ok(x.into_data())
    }

    /// Logits as a function of the target layer's post-activation output:
    /// replays only the layers after the target.
    pub fn logits_from_target(&self, feature_maps: &Tensor) -> Result<Vec<f32>> {
        if feature_maps.shape() != self.shapes[self.target].as_slice() {
            return Err(Error::shape(format!(
                "feature maps are {:?}, target layer emits {:?}",
                feature_maps.shape(),
                self.shapes[self.target]
            )));
        }
        let mut x = feature_maps.clone();
        for layer in &self.layers[self.target + 1..] {
            x = self.apply(layer, x)?.0;
        }
        Ok(x.into_data())
    }

    /// Predicted class (lowest index on ties).
    pub fn classify(&self, image: &Tensor) -> Result<usize> {
        Ok(ops::argmax(&self.logits(image)?))
    }

    /// Forward pass that retains what the targeted backward pass needs.
    pub fn trace(&self, image: &Tensor) -> Result<Trace> {
        self.check_input(image)?;
        let n = self.layers.len();
        let mut outputs: Vec<Option<Tensor>> = vec![None; n];
        let mut argmax: Vec<Option<Vec<usize>>> = vec![None; n];
        let mut x = image.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, am) = self.apply(layer, x)?;
            if i >= self.target {
                outputs[i] = Some(y.clone());
                argmax[i] = am;
            }
            x = y;
        }
        let logits = x.into_data();
        let probabilities = ops::softmax(&logits);
        let best_class = ops::argmax(&probabilities);
        let target_feature_maps = outputs[self.target].clone().expect("target output retained");
        Ok(Trace {
            outputs,
            argmax,
            prediction: Prediction {
                logits,
                probabilities,
                target_feature_maps,
                best_class,
            },
        })
    }

    pub fn predict(&self, image: &Tensor) -> Result<Prediction> {
        Ok(self.trace(image)?.prediction)
    }

    /// ∂logit_c / ∂A for the target layer's post-activation feature maps,
    /// propagated through every layer after the target.
    pub fn grad_wrt_feature_maps(&self, trace: &Trace, class: usize) -> Result<Tensor> {
        self.check_class(class)?;
        let mut grad = vec![0.0f32; self.spec.num_classes];
        grad[class] = 1.0;
        for i in (self.target + 1..self.layers.len()).rev() {
            let out = trace.outputs[i].as_ref().expect("trace retains layers after target");
            let input_shape = &self.shapes[i - 1];
            grad = match &self.layers[i] {
                Layer::Conv {
                    weights,
                    stride,
                    padding,
                    relu,
                    ..
                } => {
                    if *relu {
                        ops::relu_backward(&mut grad, out.data());
                    }
                    let g = Tensor::new(out.shape().to_vec(), grad)?;
                    ops::conv2d_backward_input(&g, weights, input_shape, *stride, *padding)?.into_data()
                }
                Layer::MaxPool => {
                    let am = trace.argmax[i].as_ref().expect("pool winners retained");
                    ops::maxpool2x2_backward(&grad, am, input_shape)?.into_data()
                }
                Layer::Flatten => grad,
                Layer::Dense { weights, relu, .. } => {
                    if *relu {
                        ops::relu_backward(&mut grad, out.data());
                    }
                    ops::dense_backward_input(&grad, weights)?
                }
            };
        }
        Tensor::new(self.shapes[self.target].clone(), grad)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Assembles a model from `(spec, weights, bias)` triples, laying tensors
    /// out in order in one blob.
    pub struct Builder {
        pub input_shape: [usize; 3],
        pub layers: Vec<LayerSpec>,
        pub blob: Vec<f32>,
    }

    impl Builder {
        pub fn new(input_shape: [usize; 3]) -> Self {
            Self {
                input_shape,
                layers: Vec::new(),
                blob: Vec::new(),
            }
        }

        fn put(&mut self, data: Vec<f32>) -> BlobRef {
            let r = BlobRef {
                offset: self.blob.len(),
                len: data.len(),
            };
            self.blob.extend(data);
            r
        }

        pub fn conv(mut self, cin: usize, cout: usize, k: usize, pad: usize, relu: bool, w: Vec<f32>, b: Vec<f32>) -> Self {
            let weights = self.put(w);
            let bias = self.put(b);
            self.layers.push(LayerSpec::Conv2d {
                activation: if relu { Activation::Relu } else { Activation::None },
                in_channels: cin,
                out_channels: cout,
                kernel_h: k,
                kernel_w: k,
                stride: 1,
                padding: pad,
                weights,
                bias,
            });
            self
        }

        pub fn pool(mut self) -> Self {
            self.layers.push(LayerSpec::Maxpool2x2);
            self
        }

        pub fn flatten(mut self) -> Self {
            self.layers.push(LayerSpec::Flatten);
            self
        }

        pub fn dense(mut self, n: usize, m: usize, relu: bool, w: Vec<f32>, b: Vec<f32>) -> Self {
            let weights = self.put(w);
            let bias = self.put(b);
            self.layers.push(LayerSpec::Dense {
                activation: if relu { Activation::Relu } else { Activation::None },
                in_features: n,
                out_features: m,
                weights,
                bias,
            });
            self
        }

        pub fn build(self, num_classes: usize) -> Result<Model> {
            Model::from_parts(
                ModelSpec {
                    input_shape: self.input_shape,
                    num_classes,
                    gradcam_target: None,
                    class_names: None,
                    layers: self.layers,
                },
                self.blob,
            )
        }
    }

    pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    /// conv(1→4)+relu, pool, conv(4→4)+relu [target], pool, flatten, dense+relu, dense.
    pub fn small_cnn(seed: u64) -> Model {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Builder::new([1, 8, 8])
            .conv(1, 4, 3, 1, true, rand_vec(&mut rng, 36, 0.8), rand_vec(&mut rng, 4, 0.1))
            .pool()
            .conv(4, 4, 3, 1, true, rand_vec(&mut rng, 144, 0.5), rand_vec(&mut rng, 4, 0.1))
            .pool()
            .flatten()
            .dense(16, 6, true, rand_vec(&mut rng, 96, 0.5), rand_vec(&mut rng, 6, 0.1))
            .dense(6, 3, false, rand_vec(&mut rng, 18, 0.8), rand_vec(&mut rng, 3, 0.1))
            .build(3)
            .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_sum_head_has_unit_gradient() {
        // conv target, then flatten + dense(all ones): logit = Σ A
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Builder::new([1, 4, 4])
            .conv(1, 2, 3, 1, true, rand_vec(&mut rng, 18, 1.0), vec![0.0, 0.0])
            .flatten()
            .dense(32, 1, false, vec![1.0; 32], vec![0.0])
            .build(1)
            .unwrap();
        let img = random_image(&mut rng, [1, 4, 4]);
        let trace = model.trace(&img).unwrap();
        let g = model.grad_wrt_feature_maps(&trace, 0).unwrap();
        assert_eq!(g.shape(), &[2, 4, 4]);
        assert!(g.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gradient_ignores_other_output_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = small_cnn(4);
        let img = random_image(&mut rng, [1, 8, 8]);
        let g0 = model.grad_wrt_feature_maps(&model.trace(&img).unwrap(), 0).unwrap();

        let mut spec = model.spec().clone();
        let mut blob = model.blob().to_vec();
        let LayerSpec::Dense { weights, .. } = spec.layers.last().unwrap().clone() else { panic!() };
        // rows 1 and 2 of the final 3×6 matrix
        for v in &mut blob[weights.offset + 6..weights.end()] {
            *v = rng.gen_range(-3.0..3.0);
        }
        spec.class_names = None;
        let perturbed = Model::from_parts(spec, blob).unwrap();
        let g0b = perturbed.grad_wrt_feature_maps(&perturbed.trace(&img).unwrap(), 0).unwrap();
        assert_eq!(g0, g0b);
    }

    #[test]
    fn doubling_row_doubles_gradient_in_linear_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let build = |scale: f32, rng: &mut ChaCha8Rng| {
            let mut r2 = rng.clone();
            let conv_w = rand_vec(&mut r2, 18, 1.0);
            let mut dense_w = rand_vec(&mut r2, 3 * 8, 1.0);
            for v in &mut dense_w[8..16] {
                *v *= scale;
            }
            Builder::new([1, 4, 4])
                .conv(1, 2, 3, 1, true, conv_w, vec![0.1, -0.1])
                .pool()
                .flatten()
                .dense(8, 3, false, dense_w, vec![0.0; 3])
                .build(3)
                .unwrap()
        };
        let a = build(1.0, &mut rng);
        let b = build(2.0, &mut rng);
        let img = random_image(&mut rng, [1, 4, 4]);
        let ga = a.grad_wrt_feature_maps(&a.trace(&img).unwrap(), 1).unwrap();
        let gb = b.grad_wrt_feature_maps(&b.trace(&img).unwrap(), 1).unwrap();
        for (x, y) in ga.data().iter().zip(gb.data()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn finite_differences_agree_with_backward_pass() {
        let model = small_cnn(17);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, [1, 8, 8]);
        let trace = model.trace(&img).unwrap();
        let tail = |a: &Tensor| model.logits_from_target(a).unwrap();
        let a = trace.prediction.target_feature_maps.clone();
        let (mut checked, mut kinks) = (0, 0);
        for class in 0..3 {
            let g = model.grad_wrt_feature_maps(&trace, class).unwrap();
            for idx in 0..a.len() {
                let eps = 1e-3f32;
                let mut p = a.clone();
                p.data_mut()[idx] += eps;
                let mut m = a.clone();
                m.data_mut()[idx] -= eps;
                let (fp, f0, fm) = (tail(&p)[class], tail(&a)[class], tail(&m)[class]);
                // a kink (pooling tie or ReLU hinge) between a-eps and a+eps has no derivative
                if ((fp - f0) - (f0 - fm)).abs() > 0.1 * (fp - f0).abs().max(1e-5) {
                    kinks += 1;
                    continue;
                }
                checked += 1;
                let fd = (fp - fm) / (2.0 * eps);
                let an = g.data()[idx];
                assert!((fd - an).abs() <= 1e-2 * an.abs().max(1e-2), "class {class} idx {idx}: {fd} vs {an}");
            }
        }
        assert!(checked >= 2 * kinks, "checked {checked}, kinks {kinks}");
    }

    #[test]
    fn forward_is_deterministic_and_probabilities_sum_to_one() {
        let model = small_cnn(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = random_image(&mut rng, [1, 8, 8]);
        let a = model.predict(&img).unwrap();
        let b = model.predict(&img).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(model.logits(&img).unwrap(), a.logits);
        assert!((a.probabilities.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert!(a.probabilities.iter().all(|&p| p >= 0.0));
        assert_eq!(a.target_feature_maps.shape(), &[4, 4, 4]);
    }

    #[test]
    fn invalid_class_and_shape_are_rejected() {
        let model = small_cnn(3);
        let img = Tensor::zeros(vec![1, 8, 8]);
        let trace = model.trace(&img).unwrap();
        assert_eq!(model.grad_wrt_feature_maps(&trace, 3).unwrap_err().name(), "InvalidClass");
        assert_eq!(model.logits(&Tensor::zeros(vec![1, 8, 9])).unwrap_err().name(), "ShapeMismatch");
    }

    #[test]
    fn load_time_validation() {
        let no_conv = Builder::new([1, 2, 2]).flatten().dense(4, 2, false, vec![0.0; 8], vec![0.0; 2]).build(2);
        assert_eq!(no_conv.unwrap_err().name(), "ModelHasNoTargetLayer");

        let wrong_classes = Builder::new([1, 2, 2]).flatten().dense(4, 2, false, vec![0.0; 8], vec![0.0; 2]).build(3);
        assert_eq!(wrong_classes.unwrap_err().name(), "ShapeChainBroken");

        let bad_in = Builder::new([1, 4, 4])
            .conv(2, 1, 3, 1, true, vec![0.0; 18], vec![0.0])
            .flatten()
            .dense(16, 2, false, vec![0.0; 32], vec![0.0; 2])
            .build(2);
        assert!(matches!(bad_in.unwrap_err(), Error::ShapeChainBroken { layer: 0, .. }));

        let mut b = Builder::new([1, 4, 4])
            .conv(1, 1, 3, 1, true, vec![0.0; 9], vec![0.0])
            .flatten()
            .dense(16, 2, false, vec![0.0; 32], vec![0.0; 2]);
        b.blob.truncate(b.blob.len() - 1);
        assert!(matches!(b.build(2).unwrap_err(), Error::TruncatedBlob { layer: 2, .. }));
    }
}
