"""How far apart are two calibrations?  Reconstruction error plus cloud distances.

Perturbs one camera of the ground-truth calibration by a growing rotation and
shows how the fused-cube angle error, Hausdorff and Wasserstein distances
respond.

Run:  python3 demos/compare_calibrations.py
"""

from cubecalib.calibration import CalibrationResult
from cubecalib.geometry import RigidTransform, merge_clouds, rotation_about, transform_apply
from cubecalib.ids import CameraId, CaptureId
from cubecalib.metrics import hausdorff, subset_reconstruction_error, wasserstein
from cubecalib.synth import NoiseSpec, generate_session


def fused(clouds, result, cap):
    return merge_clouds([transform_apply(result.transforms[c], cl) for (c, k), cl in sorted(clouds.items()) if k == cap])


def main():
    session = generate_session(noise=NoiseSpec.none(), shots_per_height=1)
    clouds = session.clouds()
    truth = CalibrationResult(session.relative_truth(), [], CameraId(0, 0))
    cams = sorted(truth.transforms)
    cap = CaptureId(3, 0)
    victim = CameraId(1, 2)

    print("deg   angle err   size err   hausdorff   wasserstein")
    for deg in (0.0, 0.5, 1.0, 2.0, 5.0):
        T = truth.transforms[victim]
        moved = dict(truth.transforms)
        moved[victim] = RigidTransform(rotation_about((0, 0, 1), deg) @ T.rotation, T.translation)
        bent = CalibrationResult(moved, [], truth.reference)
        rep = subset_reconstruction_error(clouds, bent, 0.3, cams, captures={cap})
        a, b = fused(clouds, truth, cap), fused(clouds, bent, cap)
        print(f"{deg:3.1f}   {rep.angle_error:9.4f}  {rep.size_error:8.3f}mm  "
              f"{hausdorff(a, b) * 1000:8.2f}mm  {wasserstein(a, b) * 1000:10.3f}mm")


if __name__ == "__main__":
    main()
