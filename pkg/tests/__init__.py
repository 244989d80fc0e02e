"""Tests for octool"""
