import numpy as np
import pytest
import torch

torch.set_num_threads(1)


def central_difference(fn, tensor, step=1e-6):
    """Numerical gradient of the scalar ``fn()`` w.r.t. every element of ``tensor`` (modified in place)."""
    grad = torch.zeros_like(tensor)
    flat = tensor.data.view(-1)
    g = grad.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + step
            up = float(fn())
            flat[i] = orig - step
            down = float(fn())
            flat[i] = orig
            g[i] = (up - down) / (2 * step)
    return grad


def relative_error(analytic, numeric):
    a = torch.as_tensor(analytic).double().ravel()
    n = torch.as_tensor(numeric).double().ravel()
    scale = max(a.norm().item(), n.norm().item(), 1e-12)
    return (a - n).norm().item() / scale


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the acceptance summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, name, ok, detail):
        line = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
