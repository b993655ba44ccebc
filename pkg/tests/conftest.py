from dataclasses import dataclass, field

import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


# -- desk-scale training protocol shared by the acceptance suite ------------------------

TRAIN_SEEDS = range(40)
HELDOUT_SEEDS = range(1000, 1003)
FRAMES = 64
SEG_EPOCHS, SEG_LR, SEG_STRIDE = 12, 3e-3, 8
ROI_EPOCHS, ROI_STRIDE = 20, 2
FT_EPOCHS, FT_STRIDE = 3, 8


@dataclass
class DeskModels:
    train: list
    heldout: list  # rendered sequences: (Frame, SegmentationMap, Roi, center) per frame
    segnet: object
    roinet: object
    finetuned: object
    curves: dict = field(default_factory=dict)


@pytest.fixture(scope="session")
def desk_models():
    from edar.roinet import build_roinet
    from edar.segnet import build_segnet
    from edar.synth import EyeSceneParams, render_sequence
    from edar.train import LabeledSequence, finetune_segnet_on_rois, train_roinet, train_segnet

    train = [LabeledSequence.from_rendered(render_sequence(EyeSceneParams.random(s), FRAMES))
             for s in TRAIN_SEEDS]
    heldout = [render_sequence(EyeSceneParams.random(s), FRAMES) for s in HELDOUT_SEEDS]
    seg = build_segnet("S").initialize(0)
    r_seg = train_segnet(seg, train, epochs=SEG_EPOCHS, lr=SEG_LR, stride=SEG_STRIDE)
    roi = build_roinet(input_size=(32, 32)).initialize(0)
    r_roi = train_roinet(roi, train, epochs=ROI_EPOCHS, stride=ROI_STRIDE)
    ft = build_segnet("S")
    ft.load_state(seg.state())
    r_ft = finetune_segnet_on_rois(ft, roi, train, epochs=FT_EPOCHS, lr=1e-4, stride=FT_STRIDE)
    return DeskModels(train, heldout, seg, roi, ft,
                      {"segnet": r_seg.curve, "roinet": r_roi.curve, "finetune": r_ft.curve})
