import numpy as np

from dpwgan.network import GradientSet


def numerical_param_gradient(f, params, h=1e-5):
    """Central finite differences of scalar ``f()`` over a ParameterSet."""
    grads_w, grads_b = [], []
    for arr_list, out in ((params.weights, grads_w), (params.biases, grads_b)):
        for arr in arr_list:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = arr[idx]
                arr[idx] = orig + h
                up = f()
                arr[idx] = orig - h
                down = f()
                arr[idx] = orig
                g[idx] = (up - down) / (2.0 * h)
            out.append(g)
    return GradientSet(grads_w, grads_b)
