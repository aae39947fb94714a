"""Tour of the SE(3) utilities: exp/log, composition, and how a twist
covariance moves between frames through the adjoint.

Run: python3 demos/01_se3_basics.py
"""
import numpy as np

from licov import se3

np.set_printoptions(precision=4, suppress=True)

# A twist is (u, omega): translation first, rotation last.
xi = np.array([0.4, -0.2, 0.1, 0.0, 0.0, np.deg2rad(30)])
T = se3.exp(xi)
print("twist:", xi)
print("exp(twist) rotation:\n", T.R)
print("exp(twist) translation:", T.t)
print("log(exp(twist)) recovers the twist:", se3.log(T))

# Composition is plain matrix-multiplication syntax.
step = se3.exp(np.array([1.0, 0.0, 0.0, 0.0, 0.0, np.deg2rad(15)]))
pose = se3.SE3.identity()
print("\ndriving an arc with a fixed body-frame step:")
for k in range(4):
    pose = pose @ step
    print(f"  after step {k + 1}: position {pose.t}")

# A covariance expressing "uncertain along body x" keeps that meaning
# under a frame change only if it is transported by the adjoint.
cov = np.diag([0.09, 0.0025, 0.0025, 1e-6, 1e-6, 1e-6])
turn = se3.SE3(se3.rot_z(np.pi / 2), np.zeros(3))
moved = se3.transport_covariance(turn, cov)
print("\ncovariance diag before transport:", np.diag(cov)[:3])
print("after a 90-degree yaw, the large axis lands on y:", np.diag(moved)[:3])

# The adjoint is exactly the conjugation action on twists.
conj = turn @ se3.exp(xi) @ se3.inverse(turn)
direct = se3.exp(se3.adjoint(turn) @ xi)
print("\nconjugation identity residual:",
      np.abs(conj.matrix() - direct.matrix()).max())
