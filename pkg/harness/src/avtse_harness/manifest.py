"""Architecture manifest shipped inside every archive this harness writes.

This is the harness's own copy of the shipped configuration; the engine
never trusts it blindly -- it rebuilds the expected tensor table from the
manifest embedded in the file and rejects mismatches by name, so any drift
between the two sides surfaces at load time.
"""

ARCHITECTURE = {
    "format_version": 1,
    "audio": {
        "sample_rate": 16000,
        "frame_len": 320,
        "hop": 160,
        "bins": 161,
    },
    "video": {"fps": 25, "lip_size": 32, "audio_frames_per_video_frame": 4},
    "vvad": {
        "stem": {"out": 32, "kernel": [5, 7, 7], "stride": [1, 2, 2],
                 "spatial_pad": 3,
                 "pool_kernel": [1, 3, 3], "pool_stride": [1, 2, 2],
                 "pool_pad": 1},
        "blocks": [[32, 32, 1], [32, 48, 2], [48, 64, 2], [64, 128, 1]],
        "temporal": {"out": 32, "kernel": 5},
        "classifier_hidden": 64,
        "dropout": 0.3,
    },
    "tse": {
        "width": 64,
        "time_kernel": 2,
        "freq_kernel": 5,
        "encoder": [[4, 64, 1], [64, 64, 2], [64, 64, 2], [64, 64, 2]],
        "freq_ladder": [161, 161, 81, 41, 21],
        "blocks": 2,
        "crossband": {"fconv_kernel": 5, "hidden": 128},
        "narrowband": {"lstm_units": 64},
        "attention": {"heads": 4, "window": 50},
        "mask_channels": 4,
    },
    "vad_hold": "own-4-frames",
    "augment_defaults": {"delay_frames": 5, "flip_prob": 0.05},
}
