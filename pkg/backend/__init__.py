# Backend package


