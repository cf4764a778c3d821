//! Small end-to-end configurations that finish in seconds.

use std::path::Path;

use infodemic::config::RunConfig;

/// A synthetic run small enough for tests, with every cell shrunk to a few units.
pub fn tiny_config(root: &Path, documents: usize, seed: u64) -> RunConfig {
    RunConfig {
        synthetic: Some(documents),
        seed,
        cache_dir: root.join("cache"),
        output_dir: root.join("runs"),
        max_len: 16,
        rf_trees: 8,
        gb_estimators: 10,
        dnn_widths: vec![16, 8],
        cnn_kernel_widths: vec![2, 3],
        cnn_filters: 6,
        rnn_hidden: 6,
        rnn_layers: 1,
        rnn_max_len: 12,
        epochs: 3,
        batch_size: 32,
        learning_rate: 5e-3,
        rmdl_models_per_family: 1,
        rmdl_epochs: 2,
        rmdl_dnn_layers: [1, 2],
        rmdl_cnn_branches: [1, 2],
        rmdl_rnn_layers: [1, 1],
        rmdl_nodes: [4, 12],
        rmdl_kernel_widths: [2, 3],
        workers: 2,
        ..RunConfig::default()
    }
}
