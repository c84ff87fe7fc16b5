//! Parameter/MAC/FLOP accounting for the reference network and how cost
//! scales with input resolution.

use detbench::costmodel::{count_flops, storage_cost, Graph, Shape};
use detbench::nnops::{weights, RefNet, RefNetSpec};

fn main() -> detbench::Result<()> {
    let spec = RefNetSpec::default();
    let graph = spec.to_graph();
    println!("{}", graph.to_text());

    let base = count_flops(&graph, Shape::Chw(3, 320, 320))?;
    print!("{}", base.to_table());

    for side in [320, 416, 640, 800] {
        let r = count_flops(&graph, Shape::Chw(3, side, side))?;
        println!("{side:>4}px: {:.4} GFLOPs ({:.2}x of 320px)", r.gflops(), r.flops as f64 / base.flops as f64);
    }

    // Storage prediction versus the real serialized file.
    let net = RefNet::random(spec.clone(), 0)?;
    let bytes = weights::to_bytes(&net.to_entries())?;
    let layout = spec.weight_layout();
    let header = weights::header_bytes(layout.iter().map(|(n, s)| (n.as_str(), s.as_slice())));
    let predicted = storage_cost(&graph, Shape::Chw(3, 320, 320), 4, header)?;
    println!("storage: predicted {predicted} bytes, serialized {} bytes", bytes.len());

    let parsed = Graph::parse(&graph.to_text())?;
    assert_eq!(parsed, graph);
    Ok(())
}
