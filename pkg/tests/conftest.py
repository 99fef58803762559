import dataclasses

from swinstyleformer.trainer import TrainConfig

TINY = dict(steps=2, batch_size=2, eval_every=2, da_samples=8, style_dim=32, mapping_depth=2,
            stage_dims=[16, 32, 64, 128], disc_embed_dim=32, gen_pretrain_steps=3,
            n_train=4, n_eval=2)

TINY_INI = """\
[train]
steps = 2
batch_size = 2
eval_every = 2
da_samples = 8
[model]
style_dim = 32
mapping_depth = 2
stage_dims = 16, 32, 64, 128
disc_embed_dim = 32
[generator]
gen_pretrain_steps = 3
[data]
n_train = 4
n_eval = 2
"""


def tiny_config(**overrides) -> TrainConfig:
    return dataclasses.replace(TrainConfig(**TINY), **overrides)


ACCEPTANCE = {}


def record(number: int, desc: str, ok: bool, detail: str = ""):
    ACCEPTANCE[number] = (desc, ok, detail)
    print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {desc} {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        desc, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {desc} {detail}".rstrip())
