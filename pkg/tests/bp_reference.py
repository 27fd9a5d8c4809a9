"""Independent sum-product reference for the belief-propagation equivalence tests.

Runs message passing on the factor graph of the ORIGINAL network.  For each
deleted edge U -> X, the two directed messages across the U--f_X link are the
counterparts of that edge's parameters (variable-to-factor message <-> clone
prior, factor-to-variable message <-> soft-evidence row).  The schedule
matches one exact-inference sweep per outer iteration: all other messages are
flooded to convergence (the cut graph is a tree, so finitely many synchronous
rounds reach the exact messages), then every cross-link message updates once.

Deliberately separate from the package: plain dict/loop sum-product with no
shared inference code.
"""

import numpy as np


class FactorGraphBP:
    def __init__(self, net, evidence, cut_edges):
        """cut_edges: list of (parent, child) edges whose link messages are
        updated once per outer iteration."""
        self.card = {v.name: v.card for v in net.variables}
        self.factors = {}   # fid -> (scope tuple, table ndarray)
        self.var_neighbors = {v.name: [] for v in net.variables}
        for v in net.variables:
            cpt = net.cpt(v.name)
            fid = f"cpt:{v.name}"
            scope = tuple(p.name for p in cpt.parents) + (v.name,)
            self.factors[fid] = (scope, np.array(cpt.shaped, dtype=float))
            for name in scope:
                self.var_neighbors[name].append(fid)
        for name, state in evidence.items():
            fid = f"ev:{name}"
            ind = np.zeros(self.card[name])
            ind[net.var(name).index_of(state)] = 1.0
            self.factors[fid] = ((name,), ind)
            self.var_neighbors[name].append(fid)
        self.cross = set()
        for (u, x) in cut_edges:
            self.cross.add((u, f"cpt:{x}"))
            self.cross.add((f"cpt:{x}", u))
        self.messages = {}
        for fid, (scope, _) in self.factors.items():
            for name in scope:
                self.messages[(name, fid)] = np.full(self.card[name], 1.0 / self.card[name])
                self.messages[(fid, name)] = np.full(self.card[name], 1.0 / self.card[name])

    def _var_to_factor(self, name, fid):
        out = np.ones(self.card[name])
        for g in self.var_neighbors[name]:
            if g != fid:
                out = out * self.messages[(g, name)]
        s = out.sum()
        return out / s if s > 0 else out

    def _factor_to_var(self, fid, name):
        scope, table = self.factors[fid]
        work = np.array(table, dtype=float)
        for i, other in enumerate(scope):
            if other == name:
                continue
            msg = self.messages[(other, fid)]
            shape = [1] * len(scope)
            shape[i] = self.card[other]
            work = work * msg.reshape(shape)
        axis = tuple(i for i, other in enumerate(scope) if other != name)
        out = work.sum(axis=axis)
        s = out.sum()
        return out / s if s > 0 else out

    def _kept_keys(self):
        return [k for k in self.messages if k not in self.cross]

    def flood_kept(self):
        """Synchronous updates of every non-cross message until exact."""
        keys = self._kept_keys()
        for _ in range(len(keys)):
            new = {}
            for src, dst in keys:
                if src in self.var_neighbors:
                    new[(src, dst)] = self._var_to_factor(src, dst)
                else:
                    new[(src, dst)] = self._factor_to_var(src, dst)
            delta = 0.0
            for k, v in new.items():
                delta = max(delta, float(np.max(np.abs(v - self.messages[k]))))
                self.messages[k] = v
            if delta == 0.0:
                break

    def update_cross(self):
        new = {}
        for src, dst in self.cross:
            if src in self.var_neighbors:
                new[(src, dst)] = self._var_to_factor(src, dst)
            else:
                new[(src, dst)] = self._factor_to_var(src, dst)
        for k, v in new.items():
            self.messages[k] = v

    def outer_iteration(self):
        self.flood_kept()
        self.update_cross()

    def cross_messages(self, u, x):
        """(variable-to-factor, factor-to-variable) across the cut link."""
        fid = f"cpt:{x}"
        return self.messages[(u, fid)].copy(), self.messages[(fid, u)].copy()
