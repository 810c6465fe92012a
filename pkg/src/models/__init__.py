"""Pydantic data models"""
