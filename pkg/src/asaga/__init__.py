"""Asynchronous parallel sparse SAGA and friends."""
