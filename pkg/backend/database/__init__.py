# Database package


