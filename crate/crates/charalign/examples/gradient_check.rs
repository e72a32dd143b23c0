//! Verifies the encoder's analytic gradients against central finite
//! differences on the double-precision shadow path: one forward/backward
//! pass through a reduced model, then sampled components of every parameter
//! tensor are perturbed and compared.
//!
//!     cargo run --example gradient_check

use charalign::model::{forward_graph, EncoderModel, ModelConfig, PackedBatch};
use charalign::tensor::gradcheck::{check_gradients, GradCheckSettings};
use charalign::tensor::kernels::IGNORE_LABEL;
use charalign::tensor::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig {
        layers: 2,
        hidden: 16,
        heads: 2,
        feed_forward: 32,
        max_len: 16,
        dropout: 0.0,
        vocab_size: 12,
        seed: 5,
    };
    let model = EncoderModel::init(cfg)?;
    let store64 = model.store.to_f64();
    let batch = PackedBatch::new(&[vec![3, 5, 6, 7, 4], vec![2, 9, 1]], model.cfg.max_len)?;
    let labels = [IGNORE_LABEL, 8, IGNORE_LABEL, 5, IGNORE_LABEL, 4, IGNORE_LABEL, 7];

    let mut g = Graph::new(&store64, false);
    let out = forward_graph(&mut g, &model.layout, &model.cfg, &batch, true, None);
    let (loss, selected) = g.cross_entropy_masked(out.logits, &labels);
    g.backward(loss);
    println!(
        "loss over {selected} predicted positions: {:.6}",
        g.scalar(loss)
    );

    let ids: Vec<_> = store64.ids().collect();
    let mut inputs: Vec<Vec<f64>> = ids.iter().map(|&id| store64.get(id).to_vec()).collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.param_grad(id).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    let refs: Vec<&[f64]> = analytic.iter().map(Vec::as_slice).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let settings = GradCheckSettings::shadow().with_samples(6);
    let report = check_gradients(&settings, &mut inputs, &refs, &mut rng, |vals| {
        let mut store = store64.clone();
        for (&id, v) in ids.iter().zip(vals) {
            store.get_mut(id).copy_from_slice(v);
        }
        let mut g = Graph::new(&store, false);
        let out = forward_graph(&mut g, &model.layout, &model.cfg, &batch, true, None);
        let (loss, _) = g.cross_entropy_masked(out.logits, &labels);
        g.scalar(loss)
    });

    println!("{report}");
    assert!(report.passed(), "gradients disagree with finite differences");
    println!("all sampled components within tolerance");
    Ok(())
}
