#![no_main]

use hhrgnn::graphstore::{parse_edges, parse_features, parse_graph_meta, parse_labels, Graph};
use libfuzzer_sys::fuzz_target;

// graph.json, features.csv, edges.tsv and labels.csv separated by NUL bytes.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let parts: Vec<&str> = text.split('\0').collect();
    let [meta, features, edges, labels] = parts[..] else { return };
    let Ok(meta) = parse_graph_meta(meta) else { return };
    let (Ok(x), Ok(e), Ok(l)) = (
        parse_features(features, meta.num_nodes, meta.feature_dim),
        parse_edges(edges),
        parse_labels(labels),
    ) else {
        return;
    };
    if let Ok(graph) = Graph::from_parts(meta, x, e, l) {
        graph.validate().expect("assembled graphs are valid");
    }
});
