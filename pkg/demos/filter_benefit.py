"""Why fuse the magnetometer into position at all.

Double-integrating a noisy accelerometer makes position error grow like
t^1.5. A magnetic position channel (field change times F_s, in a field
with a known gradient) is noisy but does not drift. A small Kalman filter
blends the two. This demo runs a resting sensor for 10 s over a few seeds
and compares the three position channels.

Run with ``python demos/filter_benefit.py``.
"""

import numpy as np

from geomag_align.sim import LinearGradientField, Stationary, earth_field, synthesize_trace
from geomag_align.strapdown import PoseState, SensorNoiseModel
from geomag_align.wcs import TransferFunctions, locomotion_update

F_s = 0.5  # m/uT
field = LinearGradientField(earth_field(), np.eye(3) / F_s)
noise = SensorNoiseModel(acc_sigma=0.05, mag_sigma=0.5)
traj = Stationary(length_s=10.0, sample_rate_hz=100.0)

final = {"inertial": [], "magnetic": [], "fused": []}
for seed in range(20):
    samples, truth = synthesize_trace(traj, field, noise, seed=seed)
    tf = TransferFunctions(F_s, B_ref=truth.field_nav[0])
    for mode in final:
        st = PoseState(0.0)
        for k in range(1, len(samples)):
            st = locomotion_update(st, tf, samples[k], 0.01, mode=mode, q_acc=0.05, r_mag_pos=F_s * 0.5)
        final[mode].append(np.linalg.norm(st.s))

for mode, errs in final.items():
    print(f"{mode:9s} position RMSE after 10 s: {np.sqrt(np.mean(np.square(errs))):.3f} m")
# per axis sigma sqrt(dt) t^1.5 / sqrt(3); three axes add another sqrt(3)
predicted = 0.05 * np.sqrt(0.01) * 10.0**1.5
print(f"random-walk prediction for pure integration: {predicted:.3f} m")
