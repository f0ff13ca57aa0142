from collections import defaultdict
"""
Default configuration for graph translation experiments.

Channel sequences: 1 -> 5 -> 10 edge maps, 10 node maps, 10 -> 5 -> 1 on
the way back. Optimizer and batching values are our own defaults.
"""

PARAMS = defaultdict(
    # Environment
    seed=7,
    save_dirpath='',
    log_dir='',
    # Data
    scale_free_beta=0.54,
    poisson_lambda=5.0,
    train_fraction=0.4,
    auth_window=3600,
    # Translator / discriminator architecture
    encoder_channels=(1, 5, 10),
    node_channels=10,
    decoder_channels=(10, 5, 1),
    disc_edge_channels=(1, 5, 10),
    disc_node_channels=10,
    disc_graph_channels=10,
    fc_width=64,
    noise_dim=2,
    skip_mode='add',
    output_activation='relu',
    use_bias=True,
    # Training Hyperparameter
    batch_size=8,
    num_epochs=50,
    max_steps=0,
    d_steps_per_g_step=1,
    loss_mode='non_saturating',
    recon_weight=0.0,
    checkpoint_every=0,
    # Optimizer
    learning_rate_g=1e-3,
    learning_rate_d=1e-3,
    optimizer_adam_beta1=0.5,
    optimizer_adam_beta2=0.999,
    optimizer_adam_epsilon=1e-8,
    # Evaluation
    binarize_threshold=0.5,
    prob_clamp=1e-7,
    classifier_epochs=30,
    eval_split_fraction=0.5,
)
