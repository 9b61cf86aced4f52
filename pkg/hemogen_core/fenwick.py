# coding=utf-8
"""
A Fenwick tree (binary indexed tree) over non-negative float weights.

Used as the top level of the probability map's sampling index: one weight per
image row. Indices are 0-based in the public methods.
"""


class FenwickTree:
    def __init__(self, values):
        """
        Build in O(n) from the initial weights.

        :type values: Iterable[float]
        """
        values = [float(v) for v in values]
        assert len(values) > 0
        self.__size = len(values)
        self.__tree = [0.0] + values
        for j in range(1, self.__size + 1):
            parent = j + (j & -j)
            if parent <= self.__size:
                self.__tree[parent] += self.__tree[j]
        # highest power of two <= size, the first step of find()
        self.__top = 1 << (self.__size.bit_length() - 1)

    def __len__(self):
        return self.__size

    def add(self, index, delta):
        """Increments the weight at index by delta."""
        j = index + 1
        tree = self.__tree
        while j <= self.__size:
            tree[j] += delta
            j += j & -j

    def prefix(self, count):
        """Returns the sum of the first `count` weights."""
        j = count
        s = 0.0
        tree = self.__tree
        while j > 0:
            s += tree[j]
            j -= j & -j
        return s

    @property
    def total(self):
        return self.prefix(self.__size)

    def find(self, u):
        """
        Returns the smallest index whose inclusive prefix sum is > u,
        or len(self) when u is at or beyond the total.
        A zero-weight index is never returned for u >= 0.
        """
        j = 0
        s = u
        half = self.__top
        tree = self.__tree
        while half > 0:
            k = j + half
            if k <= self.__size and tree[k] <= s:
                j = k
                s -= tree[k]
            half >>= 1
        return j
