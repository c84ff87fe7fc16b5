//! Squeeze-and-excitation gating on a small feature map.

use detbench::nnops::{se_block, Linear, SeBlock, Tensor};

fn main() -> detbench::Result<()> {
    let (c, h, w) = (8, 4, 4);
    let x = Tensor::new(
        vec![c, h, w],
        (0..c * h * w).map(|i| ((i % 13) as f32 - 6.0) / 4.0).collect(),
    )?;

    let zero = SeBlock::zeroed(c, 4)?;
    let y = se_block(&x, &zero)?;
    println!("zero weights: every gate is {:?}", zero.gates(&x)?[0]);
    assert!(x.data().iter().zip(y.data()).all(|(a, b)| *b == a * 0.5));

    let m = SeBlock::bottleneck(c, 4);
    let fc1 = Linear::new(
        Tensor::new(vec![m, c], (0..m * c).map(|i| (i as f32 * 0.37).sin()).collect())?,
        Some(vec![0.1; m]),
    )?;
    let fc2 = Linear::new(
        Tensor::new(vec![c, m], (0..c * m).map(|i| (i as f32 * 0.53).cos()).collect())?,
        Some(vec![-0.2; c]),
    )?;
    let block = SeBlock::new(c, 4, fc1, fc2)?;
    println!("bottleneck {m}, {} parameters", block.param_count());
    for (k, g) in block.gates(&x)?.iter().enumerate() {
        println!("channel {k}: gate {g:.4}");
    }
    Ok(())
}
