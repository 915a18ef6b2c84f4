"""Shared test utilities."""

from dataclasses import replace

import numpy as np


def swap_path_suffixes(bundle, node):
    """Bundle with all increments and prices after ``node`` taken from the
    reversed path order; prices are respliced multiplicatively so every path
    stays internally consistent.  Everything before ``node`` is untouched,
    which is what the adaptedness checks rely on."""
    perm = np.arange(bundle.n_paths)[::-1]
    prices = bundle.prices.copy()
    anchor = prices[:, node, :]
    tail = bundle.prices[perm, node:, :] / bundle.prices[perm, node:node + 1, :]
    prices[:, node:, :] = anchor[:, None, :] * tail
    dw = bundle.wiener_increments.copy()
    dw[:, node:, :] = bundle.wiener_increments[perm, node:, :]

    move = bundle.jump_step >= node
    jump_path = bundle.jump_path.copy()
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    jump_path[move] = inv[bundle.jump_path[move]]
    order = np.lexsort((jump_path, bundle.jump_step))
    return replace(
        bundle,
        prices=prices,
        wiener_increments=dw,
        jump_path=jump_path[order],
        jump_step=bundle.jump_step[order].copy(),
        jump_cell=bundle.jump_cell[order].copy(),
        jump_time=bundle.jump_time[order].copy(),
        jump_amp=bundle.jump_amp[order].copy(),
        jump_step_ptr=bundle.jump_step_ptr.copy(),
        seed=("swapped", bundle.seed),
    )
