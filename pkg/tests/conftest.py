import numpy as np
import pytest

from locoarm import policy as PL


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory):
    """Small untrained loco+arm checkpoint pair for service-level tests."""
    root = tmp_path_factory.mktemp("ckpts")
    cfg = PL.PolicyConfig(hidden_sizes=(16, 8))
    paths = {}
    for role, embodiment, seed in (("loco", "go1", 0), ("arm", "arx5", 1)):
        obs, act = ((PL.LOCO_OBS_DIM, PL.LOCO_ACT_DIM) if role == "loco"
                    else (PL.ARM_OBS_DIM, PL.ARM_ACT_DIM))
        net = PL.ActorCritic(obs, act, cfg, seed=seed)
        ckpt = PL.checkpoint_from_net(net, role, embodiment, cfg,
                                      metadata={"control_rate_hz": 50.0})
        path = root / f"{role}.lacp"
        PL.save_checkpoint(ckpt, path)
        paths[role] = path
    return paths
