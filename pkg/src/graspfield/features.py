"""Differentiable geometric features and the readout network, in JAX.

The grasp-value evaluator consumes analytic geometric features of pose-set
samples (signed distance, softened occupancy, surface-normal alignment and the
TCP-frame offset to the nearest object center) instead of learned scene
activations. Everything here is written so that ``jax.grad`` yields exact
chain-rule gradients with respect to the raw 7-vector pose (position + raw
quaternion) and with respect to the network weights.
"""

from __future__ import annotations

import jax

jax.config.update("jax_enable_x64", True)
jax.config.update("jax_platform_name", "cpu")

import jax.numpy as jnp
import numpy as np

from . import se3

# Feature recipe constants.
OCCUPANCY_WIDTH = 0.005  # softening width of the occupancy indicator, meters
ENTRY_FEATURES = 6
MAX_BOXES = 10  # scenes are padded to a fixed component-box count for jit

# Readout network shape: shared per-entry reduction, concatenation reduction,
# two hidden blocks, scalar logistic output.
ENTRY_DIM = 16
HIDDEN_DIM = 64

_TEMPLATE = se3.default_template()
TEMPLATE_SIZE = len(_TEMPLATE)
FEATURE_LENGTH = TEMPLATE_SIZE * ENTRY_FEATURES

_TPL_POS = jnp.asarray(_TEMPLATE.positions)
_TPL_DIR = jnp.asarray(_TEMPLATE.directions)

# Fixed input scaling inside the network. The signed distance dominates
# (scale 2) while occupancy, alignment and the frame offsets are kept mild so
# that the learned logit varies smoothly over centimeter-scale pose changes
# instead of saturating into a narrow spike around the demonstrations.
INPUT_SCALE = jnp.array([2.0, 0.5, 1.0, 0.3, 0.3, 0.3])

PARAM_KEYS = (
    "entry_w", "entry_b",
    "reduce_w", "reduce_b",
    "h1_w", "h1_b",
    "h2_w", "h2_b",
    "out_w", "out_b",
)

PARAM_SHAPES = {
    "entry_w": (ENTRY_FEATURES, ENTRY_DIM),
    "entry_b": (ENTRY_DIM,),
    "reduce_w": (TEMPLATE_SIZE * ENTRY_DIM, HIDDEN_DIM),
    "reduce_b": (HIDDEN_DIM,),
    "h1_w": (HIDDEN_DIM, HIDDEN_DIM),
    "h1_b": (HIDDEN_DIM,),
    "h2_w": (HIDDEN_DIM, HIDDEN_DIM),
    "h2_b": (HIDDEN_DIM,),
    "out_w": (HIDDEN_DIM, 1),
    "out_b": (1,),
}


def scene_boxes(scene) -> tuple:
    """Pack a scene's component boxes into fixed-size arrays for jit.

    Returns (rot (B,3,3), center (B,3), half (B,3), owner_center (B,3)) with
    B = MAX_BOXES; padding boxes sit far outside the workspace so they never
    win a nearest-surface query.
    """
    rots, centers, halves, owners = [], [], [], []
    for obj in scene.objects:
        r = obj.pose.rotation_matrix()
        oc = obj.center()
        for c, h in obj.component_boxes():
            rots.append(r)
            centers.append(obj.pose.position + r @ c)
            halves.append(h)
            owners.append(oc)
    if len(rots) > MAX_BOXES:
        raise ValueError(f"scene has {len(rots)} component boxes, max is {MAX_BOXES}")
    while len(rots) < MAX_BOXES:
        rots.append(np.eye(3))
        centers.append(np.array([1e3, 1e3, 1e3]))
        halves.append(np.array([1e-3, 1e-3, 1e-3]))
        owners.append(np.array([1e3, 1e3, 1e3]))
    return (
        jnp.asarray(np.array(rots)),
        jnp.asarray(np.array(centers)),
        jnp.asarray(np.array(halves)),
        jnp.asarray(np.array(owners)),
    )


def _safe_norm(v, eps=1e-20):
    return jnp.sqrt(jnp.sum(v * v) + eps)


def _box_sdfs(x, boxes):
    rot, center, half, _ = boxes
    local = jnp.einsum("bij,bj->bi", jnp.swapaxes(rot, 1, 2), x[None, :] - center)
    q = jnp.abs(local) - half
    outside = jnp.sqrt(jnp.sum(jnp.maximum(q, 0.0) ** 2, axis=-1) + 1e-20)
    inside = jnp.minimum(jnp.max(q, axis=-1), 0.0)
    return outside + inside


def scene_sdf(x, boxes):
    """Signed distance to the nearest object surface (min over boxes)."""
    return jnp.min(_box_sdfs(x, boxes))


def _entry_features(x, d, frame, boxes):
    sdfs = _box_sdfs(x, boxes)
    sdf = jnp.min(sdfs)
    occupancy = jax.nn.sigmoid(-sdf / OCCUPANCY_WIDTH)
    normal = jax.grad(scene_sdf)(x, boxes)
    normal = normal / _safe_norm(normal)
    alignment = jnp.dot(d, normal)
    owner = boxes[3][jax.lax.stop_gradient(jnp.argmin(sdfs))]
    offset = frame.T @ (owner - x)
    return jnp.concatenate([jnp.array([sdf, occupancy, alignment]), offset])


def features_from_entries(positions, directions, frame, boxes):
    """Per-entry feature matrix (TEMPLATE_SIZE, ENTRY_FEATURES)."""
    return jax.vmap(lambda x, d: _entry_features(x, d, frame, boxes))(positions, directions)


def _quat_to_matrix(q):
    w, x, y, z = q
    return jnp.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def features_from_pose7(pose7, boxes):
    """Features of the pose-set expansion of a raw 7-vector pose.

    The quaternion part is normalized inside, so gradients with respect to the
    raw 4-vector are well defined.
    """
    t = pose7[:3]
    q = pose7[3:]
    q = q / _safe_norm(q)
    r = _quat_to_matrix(q)
    positions = t + _TPL_POS @ r.T
    directions = _TPL_DIR @ r.T
    return features_from_entries(positions, directions, r, boxes)


def mlp_logit(params, feats):
    """Readout network on a (TEMPLATE_SIZE, ENTRY_FEATURES) feature matrix."""
    h = jnp.tanh(feats * INPUT_SCALE @ params["entry_w"] + params["entry_b"])
    h = jnp.tanh(h.reshape(-1) @ params["reduce_w"] + params["reduce_b"])
    h = jnp.tanh(h @ params["h1_w"] + params["h1_b"])
    h = jnp.tanh(h @ params["h2_w"] + params["h2_b"])
    return (h @ params["out_w"] + params["out_b"])[0]


def evaluator_value_from_pose7(params, pose7, boxes):
    return jax.nn.sigmoid(mlp_logit(params, features_from_pose7(pose7, boxes)))


# Jitted entry points. Scenes share one compilation thanks to box padding.
features_batch = jax.jit(jax.vmap(features_from_pose7, in_axes=(0, None)))
value_single = jax.jit(evaluator_value_from_pose7)
grad_single = jax.jit(jax.grad(evaluator_value_from_pose7, argnums=1))
value_batch = jax.jit(jax.vmap(evaluator_value_from_pose7, in_axes=(None, 0, None)))
grad_batch = jax.jit(jax.vmap(jax.grad(evaluator_value_from_pose7, argnums=1), in_axes=(None, 0, None)))
features_entries_jit = jax.jit(features_from_entries)


values_from_features = jax.jit(
    jax.vmap(lambda p, f: jax.nn.sigmoid(mlp_logit(p, f)), in_axes=(None, 0))
)


def weighted_bce_loss(params, feats, labels, pos_weight):
    """Weighted binary cross-entropy over a batch of precomputed features.

    The positive term is weighted to counter the 1-vs-many label imbalance.
    """
    logits = jax.vmap(lambda f: mlp_logit(params, f))(feats)
    per = labels * jax.nn.softplus(-logits) + (1.0 - labels) * jax.nn.softplus(logits)
    w = jnp.where(labels > 0.5, pos_weight, 1.0)
    return jnp.sum(w * per) / jnp.sum(w)


loss_and_grad = jax.jit(jax.value_and_grad(weighted_bce_loss))


@jax.jit
def adam_train_step(params, m, v, step, feats, labels, pos_weight, lr):
    """One full-batch Adam ascent-on-negative-loss step; returns new state."""
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    loss, grads = jax.value_and_grad(weighted_bce_loss)(params, feats, labels, pos_weight)
    step = step + 1
    new_params, new_m, new_v = {}, {}, {}
    for k in params:
        m_k = beta1 * m[k] + (1 - beta1) * grads[k]
        v_k = beta2 * v[k] + (1 - beta2) * grads[k] ** 2
        m_hat = m_k / (1 - beta1 ** step)
        v_hat = v_k / (1 - beta2 ** step)
        new_params[k] = params[k] - lr * m_hat / (jnp.sqrt(v_hat) + eps)
        new_m[k] = m_k
        new_v[k] = v_k
    return new_params, new_m, new_v, step, loss
